#include "fastval/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "fastval/errors.hpp"

namespace fastval {

namespace {

constexpr std::string_view kCsvTag = "# fastval-dataset v1 ";

struct FactorDefault {
    const char* name;
    Interval train;
    Interval test;
};

// Training ranges and the nested test ranges of the two products.
const std::vector<FactorDefault>& factor_defaults(Mode mode) {
    static const std::vector<FactorDefault> varswap = {
        {"a_prime", {0.0, 0.02}, {0.005, 0.015}}, {"b", {0.0, 0.3}, {0.05, 0.25}},
        {"rho", {-0.4, 0.8}, {-0.3, 0.7}},        {"m", {-0.2, 0.6}, {-0.1, 0.5}},
        {"sigma", {0.0, 1.0}, {0.1, 0.9}},        {"r", {0.0, 0.06}, {0.01, 0.05}},
    };
    static const std::vector<FactorDefault> amput = {
        {"a_prime", {0.0, 0.02}, {0.005, 0.015}}, {"b", {0.0, 0.3}, {0.05, 0.25}},
        {"rho", {-0.4, 0.8}, {-0.3, 0.7}},        {"m", {-0.2, 0.6}, {-0.1, 0.5}},
        {"sigma", {0.0, 1.0}, {0.1, 0.9}},        {"lambda", {0.0, 1.0}, {0.1, 0.9}},
        {"K", {0.85, 1.15}, {0.9, 1.1}},          {"r", {0.0, 0.06}, {0.01, 0.05}},
    };
    return mode == Mode::VarSwap ? varswap : amput;
}

std::size_t input_dim(Mode mode) { return input_columns(mode).size(); }

nlohmann::json interval_json(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }

Interval interval_from(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) fail(ErrorCode::InvalidParameter, "range bounds must be [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

unsigned worker_count(unsigned requested, std::size_t jobs) {
    unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

struct Outcome {
    std::vector<double> y;
    std::string error;  // empty on success
};

std::vector<Outcome> price_all(Mode mode, const std::vector<std::vector<double>>& xs, const SolverConfig& solver) {
    std::vector<Outcome> out(xs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < xs.size(); i = next++) {
            try {
                out[i].y = price_record(mode, xs[i], solver);
                for (double v : out[i].y) {
                    if (!std::isfinite(v)) {
                        out[i].error = "non_finite_target";
                        break;
                    }
                }
            } catch (const Error& e) {
                out[i].error = std::string(to_string(e.code())) + ": " + e.what();
            }
        }
    };
    const unsigned n = worker_count(solver.threads, xs.size());
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return out;
}

std::string format_double(double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        fail(ErrorCode::SchemaMismatch, "bad number '" + s + "' on line " + std::to_string(line_no));
    }
    return v;
}

}  // namespace

std::string_view to_string(Mode mode) noexcept { return mode == Mode::VarSwap ? "varswap" : "amput"; }

Mode parse_mode(std::string_view name) {
    if (name == "varswap") return Mode::VarSwap;
    if (name == "amput") return Mode::AmPut;
    fail(ErrorCode::UnknownMode, "unknown mode '" + std::string(name) + "' (expected varswap or amput)");
}

std::string_view to_string(Split split) noexcept { return split == Split::Train ? "train" : "test"; }

const std::vector<std::string>& input_columns(Mode mode) {
    static const std::vector<std::string> varswap = {"a_prime", "b", "rho", "m", "sigma", "r"};
    static const std::vector<std::string> amput = {"a_prime", "b", "rho", "m", "sigma", "lambda", "K", "r"};
    return mode == Mode::VarSwap ? varswap : amput;
}

const std::vector<std::string>& target_columns(Mode mode) {
    static const std::vector<std::string> varswap = {"K_var"};
    static const std::vector<std::string> amput = {"V", "delta", "gamma", "theta"};
    return mode == Mode::VarSwap ? varswap : amput;
}

RangeSpec RangeSpec::defaults(Mode mode) {
    RangeSpec r;
    for (const auto& f : factor_defaults(mode)) {
        r.names.emplace_back(f.name);
        r.train.push_back(f.train);
        r.test.push_back(f.test);
    }
    return r;
}

void RangeSpec::validate() const {
    if (train.size() != names.size() || test.size() != names.size()) {
        fail(ErrorCode::InvalidParameter, "range spec needs train and test bounds for every factor");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Interval& tr = train[i];
        const Interval& te = test[i];
        if (!std::isfinite(tr.lo) || !std::isfinite(tr.hi) || tr.lo > tr.hi || te.lo > te.hi) {
            fail(ErrorCode::InvalidParameter, "range for " + names[i] + " is not an ordered finite interval");
        }
        if (te.lo < tr.lo || te.hi > tr.hi) {
            fail(ErrorCode::InvalidParameter, "test range for " + names[i] + " is not inside the training range");
        }
    }
}

nlohmann::json RangeSpec::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < names.size(); ++i) {
        j[names[i]] = {{"train", interval_json(train[i])}, {"test", interval_json(test[i])}};
    }
    return j;
}

RangeSpec RangeSpec::merge(const RangeSpec& base, const nlohmann::json& overrides) {
    RangeSpec r = base;
    if (overrides.is_null()) return r;
    if (!overrides.is_object()) fail(ErrorCode::InvalidParameter, "ranges must be an object keyed by factor");
    for (const auto& [name, spec] : overrides.items()) {
        const auto it = std::find(r.names.begin(), r.names.end(), name);
        if (it == r.names.end()) fail(ErrorCode::InvalidParameter, "unknown factor '" + name + "' in ranges");
        const auto i = static_cast<std::size_t>(it - r.names.begin());
        if (spec.contains("train")) r.train[i] = interval_from(spec["train"]);
        if (spec.contains("test")) r.test[i] = interval_from(spec["test"]);
    }
    r.validate();
    return r;
}

nlohmann::json SolverConfig::to_json() const {
    return {
        {"grid", {{"n_s", grid.n_s}, {"n_t", grid.n_t}, {"s_max", grid.s_max}, {"theta", grid.theta},
                  {"rannacher_steps", grid.rannacher_steps}}},
        {"psor", {{"omega", psor.omega}, {"tol", psor.tol}, {"max_iter", psor.max_iter}}},
        {"quadrature", {{"x_min", quadrature.x_min}, {"x_max", quadrature.x_max},
                        {"initial_intervals", quadrature.initial_intervals},
                        {"max_intervals", quadrature.max_intervals}, {"tolerance", quadrature.tolerance}}},
        {"max_drop_rate", max_drop_rate},
        {"max_arbitrage_drop_rate", max_arbitrage_drop_rate},
    };
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) {
    SolverConfig c;
    if (j.is_null()) return c;
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        c.grid.n_s = g.value("n_s", c.grid.n_s);
        c.grid.n_t = g.value("n_t", c.grid.n_t);
        c.grid.s_max = g.value("s_max", c.grid.s_max);
        c.grid.theta = g.value("theta", c.grid.theta);
        c.grid.rannacher_steps = g.value("rannacher_steps", c.grid.rannacher_steps);
    }
    if (j.contains("psor")) {
        const auto& p = j["psor"];
        c.psor.omega = p.value("omega", c.psor.omega);
        c.psor.tol = p.value("tol", c.psor.tol);
        c.psor.max_iter = p.value("max_iter", c.psor.max_iter);
    }
    if (j.contains("quadrature")) {
        const auto& q = j["quadrature"];
        c.quadrature.x_min = q.value("x_min", c.quadrature.x_min);
        c.quadrature.x_max = q.value("x_max", c.quadrature.x_max);
        c.quadrature.initial_intervals = q.value("initial_intervals", c.quadrature.initial_intervals);
        c.quadrature.max_intervals = q.value("max_intervals", c.quadrature.max_intervals);
        c.quadrature.tolerance = q.value("tolerance", c.quadrature.tolerance);
    }
    c.max_drop_rate = j.value("max_drop_rate", c.max_drop_rate);
    c.max_arbitrage_drop_rate = j.value("max_arbitrage_drop_rate", c.max_arbitrage_drop_rate);
    c.threads = j.value("threads", c.threads);
    return c;
}

Eigen::MatrixXd Dataset::inputs() const {
    const auto d = static_cast<Eigen::Index>(input_dim(mode));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), d);
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (Eigen::Index k = 0; k < d; ++k) out(static_cast<Eigen::Index>(i), k) = records[i].x[static_cast<std::size_t>(k)];
    }
    return out;
}

Eigen::MatrixXd Dataset::targets() const {
    const auto m = static_cast<Eigen::Index>(target_columns(mode).size());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), m);
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (Eigen::Index k = 0; k < m; ++k) out(static_cast<Eigen::Index>(i), k) = records[i].y[static_cast<std::size_t>(k)];
    }
    return out;
}

UniformStream::UniformStream(std::uint64_t seed) : engine_(seed) {}

double UniformStream::next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::vector<std::vector<double>> sample(Mode mode, Split split, std::size_t count, std::uint64_t seed,
                                        const RangeSpec& ranges) {
    if (count < 1) fail(ErrorCode::InvalidParameter, "sample count must be >= 1");
    ranges.validate();
    if (ranges.names.size() != input_dim(mode)) fail(ErrorCode::DimensionMismatch, "range spec does not match mode");
    const auto& b = ranges.bounds(split);
    UniformStream u(seed);
    std::vector<std::vector<double>> out(count, std::vector<double>(b.size()));
    for (auto& row : out) {
        for (std::size_t k = 0; k < b.size(); ++k) row[k] = b[k].lo + (b[k].hi - b[k].lo) * u.next();
    }
    return out;
}

std::vector<std::vector<double>> sample(Mode mode, Split split, std::size_t count, std::uint64_t seed) {
    return sample(mode, split, count, seed, RangeSpec::defaults(mode));
}

VarSwapInputs varswap_inputs(std::span<const double> x) {
    if (x.size() != 6) fail(ErrorCode::DimensionMismatch, "variance-swap rows have 6 inputs");
    VarSwapInputs in;
    in.slice = {x[0], x[1], x[2], x[3], x[4]};
    in.rate = x[5];
    return in;
}

PdeProblem amput_problem(std::span<const double> x, DenominatorPolicy policy) {
    if (x.size() != 8) fail(ErrorCode::DimensionMismatch, "American-put rows have 8 inputs");
    PdeProblem p;
    p.payoff = PayoffKind::Put;
    p.exercise = ExerciseStyle::American;
    p.strike = x[6];
    p.rate = x[7];
    p.maturity = 1.0;
    p.spot = 1.0;
    p.local_variance = SurfaceLocalVariance{{{x[0], x[1], x[2], x[3], x[4]}, x[5]}, policy};
    return p;
}

std::vector<double> price_record(Mode mode, std::span<const double> x, const SolverConfig& solver) {
    if (mode == Mode::VarSwap) return {fair_strike(varswap_inputs(x), solver.quadrature)};
    const PdeProblem problem = amput_problem(x, DenominatorPolicy::Throw);
    std::get<SurfaceLocalVariance>(problem.local_variance).params.validate();
    const Greeks g = solve(problem, solver.grid, solver.psor).spot_greeks;
    return {g.value, g.delta, g.gamma, g.theta};
}

Dataset generate(const GenerateOptions& opt) {
    if (opt.count < 1) fail(ErrorCode::InvalidParameter, "dataset count must be >= 1");
    const RangeSpec ranges = opt.ranges.names.empty() ? RangeSpec::defaults(opt.mode) : opt.ranges;
    ranges.validate();
    if (ranges.names.size() != input_dim(opt.mode)) fail(ErrorCode::DimensionMismatch, "range spec does not match mode");
    for (double limit : {opt.solver.max_drop_rate, opt.solver.max_arbitrage_drop_rate}) {
        if (!(limit >= 0.0 && limit < 1.0)) fail(ErrorCode::InvalidParameter, "drop-rate limits must lie in [0, 1)");
    }
    if (opt.mode == Mode::AmPut) resolve_grid(PdeProblem{}, opt.solver.grid);

    const auto& b = ranges.bounds(opt.split);
    UniformStream u(opt.seed);
    Dataset data;
    data.mode = opt.mode;
    data.records.reserve(opt.count);
    std::size_t attempts = 0;
    std::size_t dropped = 0;
    std::size_t arbitrage = 0;
    std::map<std::string, std::size_t> reasons;

    while (data.records.size() < opt.count) {
        const std::size_t need = opt.count - data.records.size();
        const std::size_t batch = need + need / 16 + 1;
        std::vector<std::vector<double>> xs(batch, std::vector<double>(b.size()));
        for (auto& row : xs) {
            for (std::size_t k = 0; k < b.size(); ++k) row[k] = b[k].lo + (b[k].hi - b[k].lo) * u.next();
        }
        // Candidates beyond the last accepted row are discarded; the stream
        // position only advances by whole batches, which depend on `need` alone.
        const auto outcomes = price_all(opt.mode, xs, opt.solver);
        for (std::size_t i = 0; i < batch && data.records.size() < opt.count; ++i) {
            ++attempts;
            if (outcomes[i].error.empty()) {
                data.records.push_back({xs[i], outcomes[i].y});
                continue;
            }
            ++dropped;
            const std::string reason = outcomes[i].error.substr(0, outcomes[i].error.find(':'));
            if (reason == to_string(ErrorCode::ButterflyViolation)) ++arbitrage;
            reasons[reason]++;
            if (opt.on_drop) opt.on_drop(attempts - 1, outcomes[i].error);
        }
        const auto n = static_cast<double>(attempts);
        const bool solver_excess = static_cast<double>(dropped - arbitrage) > opt.solver.max_drop_rate * n;
        const bool arbitrage_excess = static_cast<double>(arbitrage) > opt.solver.max_arbitrage_drop_rate * n;
        if ((solver_excess || arbitrage_excess) && attempts >= opt.count / 2) {
            std::ostringstream msg;
            msg << "dropped " << dropped << " of " << attempts << " draws (limits "
                << opt.solver.max_drop_rate * 100.0 << "% solver failures, "
                << opt.solver.max_arbitrage_drop_rate * 100.0 << "% butterfly violations)";
            for (const auto& [k, v] : reasons) msg << "; " << k << "=" << v;
            fail(ErrorCode::ExcessiveDropRate, msg.str());
        }
    }

    nlohmann::json reason_json = nlohmann::json::object();
    for (const auto& [k, v] : reasons) reason_json[k] = v;
    data.meta = {
        {"mode", std::string(to_string(opt.mode))},
        {"split", std::string(to_string(opt.split))},
        {"count", opt.count},
        {"seed", opt.seed},
        {"generator", std::string(kGeneratorName)},
        {"ranges", ranges.to_json()},
        {"solver", opt.solver.to_json()},
        {"attempts", attempts},
        {"dropped", dropped},
        {"drop_reasons", reason_json},
    };
    return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    nlohmann::json meta = data.meta.is_null() ? nlohmann::json::object() : data.meta;
    meta["mode"] = std::string(to_string(data.mode));
    os << kCsvTag << meta.dump() << '\n';

    const auto& xs = input_columns(data.mode);
    const auto& ys = target_columns(data.mode);
    std::string header;
    for (const auto& c : xs) header += c + ",";
    for (std::size_t i = 0; i < ys.size(); ++i) header += ys[i] + (i + 1 < ys.size() ? "," : "");
    os << header << '\n';

    std::string line;
    for (const auto& rec : data.records) {
        if (rec.x.size() != xs.size() || rec.y.size() != ys.size()) {
            fail(ErrorCode::DimensionMismatch, "record width does not match the dataset mode");
        }
        line.clear();
        for (double v : rec.x) line += format_double(v) + ",";
        for (std::size_t i = 0; i < rec.y.size(); ++i) line += format_double(rec.y[i]) + (i + 1 < rec.y.size() ? "," : "");
        os << line << '\n';
    }
    if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

Dataset read_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind(kCsvTag, 0) != 0) {
        fail(ErrorCode::SchemaMismatch, path.string() + " lacks the dataset header line");
    }
    Dataset data;
    try {
        data.meta = nlohmann::json::parse(line.substr(kCsvTag.size()));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaMismatch, std::string("bad dataset metadata: ") + e.what());
    }
    if (!data.meta.is_object() || !data.meta.contains("mode")) fail(ErrorCode::SchemaMismatch, "dataset metadata lacks mode");
    data.mode = parse_mode(data.meta["mode"].get<std::string>());

    const auto& xs = input_columns(data.mode);
    const auto& ys = target_columns(data.mode);
    std::vector<std::string> expected = xs;
    expected.insert(expected.end(), ys.begin(), ys.end());
    if (!std::getline(is, line) || split_csv_line(line) != expected) {
        fail(ErrorCode::SchemaMismatch, path.string() + " has unexpected columns for mode " + std::string(to_string(data.mode)));
    }
    std::size_t line_no = 2;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != expected.size()) {
            fail(ErrorCode::SchemaMismatch, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                                " fields, expected " + std::to_string(expected.size()));
        }
        ValuationRecord rec;
        rec.x.reserve(xs.size());
        rec.y.reserve(ys.size());
        for (std::size_t i = 0; i < xs.size(); ++i) rec.x.push_back(parse_double(cells[i], line_no));
        for (std::size_t i = 0; i < ys.size(); ++i) rec.y.push_back(parse_double(cells[xs.size() + i], line_no));
        data.records.push_back(std::move(rec));
    }
    return data;
}

double relative_error(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size() || truth.empty()) fail(ErrorCode::DimensionMismatch, "error inputs differ in size");
    double abs_err = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        abs_err += std::abs(pred[i] - truth[i]);
        mean += truth[i];
    }
    if (mean == 0.0) fail(ErrorCode::DegenerateData, "relative error undefined for zero-mean targets");
    return abs_err / std::abs(mean);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json e = nlohmann::json::object();
    for (const auto& [k, v] : err) e[k] = v;
    return {{"mode", std::string(to_string(mode))}, {"n_train", n_train}, {"n_test", n_test}, {"err", e},
            {"timing_seconds", timing_seconds}, {"seed", seed}, {"config", config}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.n_train = j.at("n_train").get<std::size_t>();
    r.n_test = j.at("n_test").get<std::size_t>();
    for (const auto& [k, v] : j.at("err").items()) r.err[k] = v.get<double>();
    r.timing_seconds = j.value("timing_seconds", 0.0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.config = j.value("config", nlohmann::json::object());
    return r;
}

Evaluation evaluate(const std::vector<TrainedGpr>& models, const Dataset& test) {
    const auto& names = target_columns(test.mode);
    if (models.size() != names.size()) fail(ErrorCode::SchemaMismatch, "one model per target is required");
    if (test.records.empty()) fail(ErrorCode::InvalidParameter, "test set is empty");
    std::vector<const TrainedGpr*> ptrs;
    for (std::size_t t = 0; t < models.size(); ++t) {
        if (models[t].dim() != input_dim(test.mode)) {
            fail(ErrorCode::SchemaMismatch, "model for " + names[t] + " expects " + std::to_string(models[t].dim()) + " inputs");
        }
        if (!models[t].target().empty() && models[t].target() != names[t]) {
            fail(ErrorCode::SchemaMismatch, "model order does not match targets (got " + models[t].target() + ")");
        }
        ptrs.push_back(&models[t]);
    }
    const Eigen::MatrixXd x = test.inputs();
    const Eigen::MatrixXd truth = test.targets();

    Evaluation out;
    const auto start = std::chrono::steady_clock::now();
    out.predictions = predict_means(ptrs, x);
    out.report.timing_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    out.report.mode = test.mode;
    out.report.n_train = models.front().n_train();
    out.report.n_test = test.records.size();
    for (std::size_t t = 0; t < names.size(); ++t) {
        const auto c = static_cast<Eigen::Index>(t);
        const Eigen::VectorXd tcol = truth.col(c);
        const Eigen::VectorXd pcol = out.predictions.col(c);
        out.report.err[names[t]] = relative_error(std::span<const double>(tcol.data(), static_cast<std::size_t>(tcol.size())),
                                                  std::span<const double>(pcol.data(), static_cast<std::size_t>(pcol.size())));
    }
    return out;
}

}  // namespace fastval
