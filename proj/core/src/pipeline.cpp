#include "fastval/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fastval/errors.hpp"
#include "fastval/varswap.hpp"
#include "fastval/volsurface.hpp"

namespace fastval {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void say(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

std::string num(double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    return os;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
    if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return out;
}

Dataset load_split(const RunConfig& cfg, const std::string& name) {
    Dataset d = read_csv(cfg.out / (name + ".csv"));
    if (d.mode != cfg.mode) {
        fail(ErrorCode::SchemaMismatch, name + ".csv holds " + std::string(to_string(d.mode)) + " rows, expected " +
                                            std::string(to_string(cfg.mode)));
    }
    if (d.records.empty()) fail(ErrorCode::SchemaMismatch, name + ".csv has no rows");
    return d;
}

fs::path model_path(const fs::path& out, const std::string& target) { return out / "models" / (target + ".gpr"); }

}  // namespace

GridSpec parse_grid(const std::string& text) {
    GridSpec g;
    const auto x = text.find_first_of("xX");
    try {
        std::size_t used = 0;
        if (x == std::string::npos) {
            g.n_s = g.n_t = std::stoi(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
        } else {
            const std::string a = text.substr(0, x);
            const std::string b = text.substr(x + 1);
            g.n_s = std::stoi(a, &used);
            if (used != a.size()) throw std::invalid_argument(text);
            g.n_t = std::stoi(b, &used);
            if (used != b.size()) throw std::invalid_argument(text);
        }
    } catch (const std::logic_error&) {
        fail(ErrorCode::InvalidParameter, "grid must look like NxM, got '" + text + "'");
    }
    if (g.n_s < 16 || g.n_t < 16) fail(ErrorCode::InvalidParameter, "grid needs at least 16 intervals per axis");
    return g;
}

std::string format_grid(const GridSpec& grid) { return std::to_string(grid.n_s) + "x" + std::to_string(grid.n_t); }

RunConfig RunConfig::defaults(Mode mode) {
    RunConfig c;
    c.mode = mode;
    c.out = fs::path("runs") / std::string(to_string(mode));
    c.ranges = RangeSpec::defaults(mode);
    const HyperSearch s = mode == Mode::VarSwap ? HyperSearch::length_only() : HyperSearch::with_noise();
    c.length_grid = s.length_grid;
    c.noise_grid = s.noise_grid;
    c.train_count = mode == Mode::VarSwap ? 2000 : 5000;
    c.test_count = 2000;
    c.bench_grids = {GridSpec{200, 200}, GridSpec{500, 500}, GridSpec{1000, 1000}};
    return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, std::optional<Mode> mode) {
    if (!j.is_object() && !j.is_null()) fail(ErrorCode::InvalidParameter, "config must be a JSON object");
    const nlohmann::json cfg = j.is_null() ? nlohmann::json::object() : j;
    Mode m = mode ? *mode : parse_mode(cfg.value("mode", std::string("varswap")));
    RunConfig c = defaults(m);
    try {
        if (cfg.contains("out")) c.out = cfg["out"].get<std::string>();
        c.seed = cfg.value("seed", c.seed);
        c.train_count = cfg.value("train_count", c.train_count);
        c.test_count = cfg.value("test_count", c.test_count);
        if (cfg.contains("ranges")) c.ranges = RangeSpec::merge(c.ranges, cfg["ranges"]);
        if (cfg.contains("solver")) c.solver = SolverConfig::from_json(cfg["solver"]);
        if (cfg.contains("search")) {
            const auto& s = cfg["search"];
            c.length_grid = s.value("length_grid", c.length_grid);
            c.noise_grid = s.value("noise_grid", c.noise_grid);
            c.refine = s.value("refine", c.refine);
        }
        if (cfg.contains("bench")) {
            const auto& b = cfg["bench"];
            if (b.contains("grids")) {
                c.bench_grids.clear();
                for (const auto& g : b["grids"]) c.bench_grids.push_back(parse_grid(g.get<std::string>()));
            }
            c.bench_budget_seconds = b.value("budget_seconds", c.bench_budget_seconds);
            c.bench_repeats = b.value("repeats", c.bench_repeats);
        }
        if (cfg.contains("sensitivity")) {
            const auto& s = cfg["sensitivity"];
            if (s.contains("factors") && !s["factors"].is_null()) c.factors = s["factors"].get<std::vector<std::string>>();
            c.sweep_points = s.value("points", c.sweep_points);
            if (s.contains("baseline")) c.baseline = s["baseline"];
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidParameter, std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json grids = nlohmann::json::array();
    for (const auto& g : bench_grids) grids.push_back(format_grid(g));
    return {
        {"mode", std::string(to_string(mode))},
        {"seed", seed},
        {"train_count", train_count},
        {"test_count", test_count},
        {"ranges", ranges.to_json()},
        {"solver", solver.to_json()},
        {"search", {{"length_grid", length_grid}, {"noise_grid", noise_grid}, {"refine", refine}}},
        {"bench", {{"grids", grids}, {"budget_seconds", bench_budget_seconds}, {"repeats", bench_repeats}}},
        {"sensitivity",
         {{"factors", factors ? nlohmann::json(*factors) : nlohmann::json(nullptr)},
          {"points", sweep_points},
          {"baseline", baseline.is_null() ? nlohmann::json::object() : baseline}}},
    };
}

void RunConfig::validate() const {
    if (train_count < 2) fail(ErrorCode::InvalidParameter, "train_count must be >= 2");
    if (test_count < 1) fail(ErrorCode::InvalidParameter, "test_count must be >= 1");
    ranges.validate();
    if (ranges.names != input_columns(mode)) fail(ErrorCode::InvalidParameter, "ranges do not match the mode's factors");
    resolve_grid(PdeProblem{}, solver.grid);
    if (length_grid.empty()) fail(ErrorCode::InvalidParameter, "length_grid is empty");
    for (double l : length_grid) {
        if (!(l > 0.0)) fail(ErrorCode::InvalidParameter, "length scales must be > 0");
    }
    for (double s : noise_grid) {
        if (!(s >= 0.0)) fail(ErrorCode::InvalidParameter, "noise levels must be >= 0");
    }
    for (const auto& g : bench_grids) resolve_grid(PdeProblem{}, g);
    if (!(bench_budget_seconds > 0.0)) fail(ErrorCode::InvalidParameter, "bench budget must be > 0");
    if (bench_repeats < 1) fail(ErrorCode::InvalidParameter, "bench repeats must be >= 1");
    if (sweep_points < 2) fail(ErrorCode::InvalidParameter, "sweeps need at least 2 points");
}

HyperSearch RunConfig::search() const {
    HyperSearch s;
    s.length_grid = length_grid;
    s.noise_grid = noise_grid;
    s.refine = refine;
    return s;
}

GenSummary cmd_gen(const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    const auto start = Clock::now();
    GenSummary out;
    auto run_split = [&](Split split, std::size_t count, std::uint64_t seed) {
        GenerateOptions opt;
        opt.mode = cfg.mode;
        opt.split = split;
        opt.count = count;
        opt.seed = seed;
        opt.ranges = cfg.ranges;
        opt.solver = cfg.solver;
        opt.on_drop = [&](std::size_t attempt, const std::string& reason) {
            say(log, std::string(to_string(split)) + " draw " + std::to_string(attempt) + " dropped: " + reason);
        };
        say(log, "generating " + std::to_string(count) + " " + std::string(to_string(split)) + " rows");
        Dataset d = generate(opt);
        write_csv(d, cfg.out / (std::string(to_string(split)) + ".csv"));
        return d;
    };
    out.train = run_split(Split::Train, cfg.train_count, cfg.seed);
    const double train_seconds = seconds_since(start);
    out.test = run_split(Split::Test, cfg.test_count, cfg.seed + 1);
    out.seconds = seconds_since(start);

    write_json(cfg.out / "manifest.json",
               {{"config", cfg.to_json()},
                {"files", {"train.csv", "test.csv"}},
                {"train", {{"rows", out.train.records.size()}, {"attempts", out.train.meta["attempts"]},
                           {"dropped", out.train.meta["dropped"]}, {"drop_reasons", out.train.meta["drop_reasons"]}}},
                {"test", {{"rows", out.test.records.size()}, {"attempts", out.test.meta["attempts"]},
                          {"dropped", out.test.meta["dropped"]}, {"drop_reasons", out.test.meta["drop_reasons"]}}},
                {"timing_seconds", {{"train", train_seconds}, {"total", out.seconds}}}});
    say(log, "wrote " + (cfg.out / "train.csv").string() + " and test.csv in " + num(out.seconds) + " s");
    return out;
}

TrainSummary cmd_train(const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    const Dataset train = load_split(cfg, "train");
    const auto& names = target_columns(cfg.mode);
    HyperSearch search = cfg.search();
    search.progress = [&](const std::string& msg) { say(log, msg); };

    const auto start = Clock::now();
    TrainSummary out;
    out.fits = fit_many(train.inputs(), train.targets(), search, names);
    out.seconds = seconds_since(start);

    nlohmann::json summary = {{"mode", std::string(to_string(cfg.mode))}, {"n_train", train.records.size()},
                              {"timing_seconds", out.seconds}, {"targets", nlohmann::json::object()}};
    fs::create_directories(cfg.out / "models");
    for (std::size_t t = 0; t < names.size(); ++t) {
        const FitResult& f = out.fits[t];
        f.model.save(model_path(cfg.out, names[t]));
        auto os = open_out(cfg.out / ("lml_" + names[t] + ".csv"));
        os << "length_scale,noise,lml,is_argmax\n";
        const LmlLandscape& ls = f.landscape;
        for (std::size_t il = 0; il < ls.length_grid.size(); ++il) {
            for (std::size_t is = 0; is < ls.noise_grid.size(); ++is) {
                const bool best = il == ls.best_length && is == ls.best_noise;
                os << num(ls.length_grid[il]) << ',' << num(ls.noise_grid[is]) << ',' << num(ls.at(il, is)) << ','
                   << (best ? 1 : 0) << '\n';
            }
        }
        summary["targets"][names[t]] = {
            {"grid_best", {{"length_scale", ls.length_grid[ls.best_length]},
                           {"noise", ls.noise_grid[ls.best_noise]},
                           {"lml", ls.best_value()}}},
            {"selected", {{"length_scale", f.selected.length_scale}, {"noise", f.selected.noise},
                          {"lml", f.selected_lml}}},
            {"jitter", f.model.jitter()},
        };
        say(log, names[t] + ": l_g=" + num(f.selected.length_scale) + " sigma_g=" + num(f.selected.noise));
    }
    write_json(cfg.out / "train_summary.json", summary);
    return out;
}

std::vector<TrainedGpr> load_models(const fs::path& out, Mode mode) {
    std::vector<TrainedGpr> models;
    for (const auto& name : target_columns(mode)) {
        models.push_back(TrainedGpr::load(model_path(out, name)));
        if (models.back().target() != name) {
            fail(ErrorCode::SchemaMismatch, model_path(out, name).string() + " holds a model for " + models.back().target());
        }
    }
    // Models trained together share their inputs; keep one copy.
    for (std::size_t t = 1; t < models.size(); ++t) models[t].share_inputs_with(models[0]);
    return models;
}

EvalReport cmd_eval(const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    const Dataset test = load_split(cfg, "test");
    const auto models = load_models(cfg.out, cfg.mode);
    Evaluation ev = evaluate(models, test);
    ev.report.seed = cfg.seed;
    ev.report.config = cfg.to_json();

    const auto& names = target_columns(cfg.mode);
    const Eigen::MatrixXd truth = test.targets();
    for (std::size_t t = 0; t < names.size(); ++t) {
        auto os = open_out(cfg.out / ("scatter_" + names[t] + ".csv"));
        os << "truth,prediction\n";
        for (Eigen::Index i = 0; i < truth.rows(); ++i) {
            os << num(truth(i, static_cast<Eigen::Index>(t))) << ',' << num(ev.predictions(i, static_cast<Eigen::Index>(t)))
               << '\n';
        }
        say(log, "Err(" + names[t] + ") = " + num(ev.report.err[names[t]]));
    }
    write_json(cfg.out / "eval_report.json", ev.report.to_json());
    return ev.report;
}

nlohmann::json BenchReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"method", r.method}, {"grid", r.grid}, {"solves", r.solves},
                             {"measured_seconds", r.measured_seconds},
                             {"seconds_per_valuation", r.seconds_per_valuation},
                             {"extrapolated_seconds", r.extrapolated_seconds}, {"speedup", r.speedup}});
    }
    nlohmann::json scaling = nlohmann::json::array();
    for (const auto& [m, s] : gpr_scaling) scaling.push_back({{"queries", m}, {"seconds", s}});
    return {{"mode", std::string(to_string(mode))}, {"n_queries", n_queries}, {"n_train", n_train},
            {"gpr_seconds", gpr_seconds}, {"gpr_scaling", scaling}, {"rows", rows_json}};
}

BenchReport cmd_bench(const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    const Dataset test = load_split(cfg, "test");
    const auto models = load_models(cfg.out, cfg.mode);
    std::vector<const TrainedGpr*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    const Eigen::MatrixXd x = test.inputs();

    BenchReport rep;
    rep.mode = cfg.mode;
    rep.n_queries = test.records.size();
    rep.n_train = models.front().n_train();

    auto time_batch = [&](const Eigen::MatrixXd& q) {
        std::vector<double> times;
        volatile double sink = predict_means(ptrs, q)(0, 0);  // warm-up
        for (int r = 0; r < cfg.bench_repeats; ++r) {
            const auto start = Clock::now();
            sink = predict_means(ptrs, q)(0, 0);
            times.push_back(seconds_since(start));
        }
        (void)sink;
        std::sort(times.begin(), times.end());
        return times[times.size() / 2];
    };
    rep.gpr_seconds = time_batch(x);
    for (std::size_t m : {rep.n_queries / 4, rep.n_queries / 2, rep.n_queries}) {
        if (m == 0) continue;
        rep.gpr_scaling.emplace_back(m, m == rep.n_queries ? rep.gpr_seconds : time_batch(x.topRows(static_cast<Eigen::Index>(m))));
    }
    say(log, "GPR batch of " + std::to_string(rep.n_queries) + " rows: " + num(rep.gpr_seconds) + " s");

    auto run_pricer = [&](const std::string& method, const std::string& grid_name,
                          const std::function<void(const std::vector<double>&)>& price) {
        BenchRow row;
        row.method = method;
        row.grid = grid_name;
        const auto start = Clock::now();
        while (row.solves < rep.n_queries) {
            price(test.records[row.solves].x);
            ++row.solves;
            if (seconds_since(start) >= cfg.bench_budget_seconds) break;
        }
        row.measured_seconds = seconds_since(start);
        row.seconds_per_valuation = row.measured_seconds / static_cast<double>(row.solves);
        row.extrapolated_seconds = row.seconds_per_valuation * static_cast<double>(rep.n_queries);
        row.speedup = row.extrapolated_seconds / rep.gpr_seconds;
        say(log, method + (grid_name.empty() ? "" : " " + grid_name) + ": " + std::to_string(row.solves) +
                     " solves in " + num(row.measured_seconds) + " s, extrapolated " + num(row.extrapolated_seconds) +
                     " s, speedup " + num(row.speedup));
        rep.rows.push_back(row);
    };

    if (cfg.mode == Mode::VarSwap) {
        run_pricer("quadrature", "", [&](const std::vector<double>& row) {
            (void)fair_strike(varswap_inputs(row), cfg.solver.quadrature);
        });
    } else {
        for (const auto& g : cfg.bench_grids) {
            run_pricer("crank_nicolson", format_grid(g), [&](const std::vector<double>& row) {
                (void)solve(amput_problem(row, DenominatorPolicy::Clamp), g, cfg.solver.psor);
            });
        }
    }

    write_json(cfg.out / "bench.json", rep.to_json());
    auto os = open_out(cfg.out / "bench.csv");
    os << "method,grid,solves,measured_seconds,extrapolated_seconds,gpr_seconds,speedup\n";
    for (const auto& r : rep.rows) {
        os << r.method << ',' << r.grid << ',' << r.solves << ',' << num(r.measured_seconds) << ','
           << num(r.extrapolated_seconds) << ',' << num(rep.gpr_seconds) << ',' << num(r.speedup) << '\n';
    }
    return rep;
}

SweepKind parse_sweep_kind(const std::string& name) {
    if (name == "varswap") return SweepKind::VarSwap;
    if (name == "amput") return SweepKind::AmPut;
    if (name == "surface") return SweepKind::Surface;
    fail(ErrorCode::UnknownMode, "unknown sensitivity mode '" + name + "' (expected varswap, amput or surface)");
}

std::vector<std::string> sweep_factors(SweepKind kind) {
    switch (kind) {
        case SweepKind::VarSwap: return {"a_prime", "b", "rho", "m", "sigma", "r"};
        case SweepKind::AmPut: return {"a_prime", "b", "rho", "m", "sigma", "lambda", "K", "r"};
        case SweepKind::Surface: return {"a_prime", "b", "rho", "m", "sigma", "lambda"};
    }
    return {};
}

std::map<std::string, double> sweep_baseline(SweepKind kind, const nlohmann::json& overrides) {
    std::map<std::string, double> b;
    switch (kind) {
        case SweepKind::VarSwap:
            b = {{"a_prime", 0.01}, {"b", 0.15}, {"rho", -0.1}, {"m", 0.2}, {"sigma", 0.2}, {"r", 0.03}};
            break;
        case SweepKind::AmPut:
            b = {{"a_prime", 0.01}, {"b", 0.15}, {"rho", 0.2}, {"m", 0.2}, {"sigma", 0.5},
                 {"lambda", 0.5},   {"K", 1.0},  {"r", 0.03}};
            break;
        case SweepKind::Surface:
            b = {{"a_prime", 0.01}, {"b", 0.15}, {"rho", 0.2}, {"m", 0.2}, {"sigma", 0.5}, {"lambda", 0.0}};
            break;
    }
    if (overrides.is_object()) {
        for (const auto& [k, v] : overrides.items()) {
            if (!b.count(k)) fail(ErrorCode::InvalidParameter, "baseline has no factor '" + k + "'");
            b[k] = v.get<double>();
        }
    }
    return b;
}

Interval sweep_range(SweepKind kind, const std::string& factor) {
    const RangeSpec r = RangeSpec::defaults(Mode::AmPut);
    const auto it = std::find(r.names.begin(), r.names.end(), factor);
    const auto allowed = sweep_factors(kind);
    if (it == r.names.end() || std::find(allowed.begin(), allowed.end(), factor) == allowed.end()) {
        fail(ErrorCode::InvalidParameter, "factor '" + factor + "' cannot be swept in this mode");
    }
    Interval i = r.train[static_cast<std::size_t>(it - r.names.begin())];
    if (factor == "sigma") i.lo = 0.01;  // sigma = 0 is not an admissible slice
    return i;
}

std::vector<fs::path> cmd_sensitivity(const RunConfig& cfg, SweepKind kind, const Logger& log) {
    if (cfg.sweep_points < 2) fail(ErrorCode::InvalidParameter, "sweeps need at least 2 points");
    const auto base = sweep_baseline(kind, cfg.baseline);
    const std::vector<std::string> factors = cfg.factors ? *cfg.factors : sweep_factors(kind);
    for (const auto& f : factors) {
        const Interval i = sweep_range(kind, f);
        const double v = base.at(f);
        if (v < i.lo || v > i.hi) {
            fail(ErrorCode::InvalidParameter, "baseline " + f + "=" + num(v) + " lies outside [" + num(i.lo) + ", " +
                                                  num(i.hi) + "]");
        }
    }
    const std::string prefix(kind == SweepKind::VarSwap ? "varswap" : kind == SweepKind::AmPut ? "amput" : "surface");
    const fs::path dir = cfg.out / "sensitivity";
    std::vector<fs::path> written;

    auto slice_of = [](const std::map<std::string, double>& p) {
        return SviSlice{p.at("a_prime"), p.at("b"), p.at("rho"), p.at("m"), p.at("sigma")};
    };

    for (const auto& f : factors) {
        const Interval range = sweep_range(kind, f);
        const auto values = linspace(range.lo, range.hi, cfg.sweep_points);
        const fs::path path = dir / (prefix + "_" + f + ".csv");
        auto os = open_out(path);
        if (kind == SweepKind::VarSwap) {
            os << f << ",K_var\n";
            for (double v : values) {
                auto p = base;
                p[f] = v;
                VarSwapInputs in{slice_of(p), p.at("r")};
                os << num(v) << ',' << num(fair_strike(in, cfg.solver.quadrature)) << '\n';
            }
        } else if (kind == SweepKind::AmPut) {
            os << f << ",V,delta,gamma,theta,butterfly_ok\n";
            for (double v : values) {
                auto p = base;
                p[f] = v;
                const std::vector<double> x = {p.at("a_prime"), p.at("b"), p.at("rho"), p.at("m"),
                                               p.at("sigma"),   p.at("lambda"), p.at("K"), p.at("r")};
                // Report the strict surface when admissible, otherwise the clamped one.
                int ok = 1;
                Greeks g;
                try {
                    g = solve(amput_problem(x, DenominatorPolicy::Throw), cfg.solver.grid, cfg.solver.psor).spot_greeks;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::ButterflyViolation) throw;
                    ok = 0;
                    g = solve(amput_problem(x, DenominatorPolicy::Clamp), cfg.solver.grid, cfg.solver.psor).spot_greeks;
                }
                os << num(v) << ',' << num(g.value) << ',' << num(g.delta) << ',' << num(g.gamma) << ','
                   << num(g.theta) << ',' << ok << '\n';
            }
        } else if (f == "lambda") {
            const auto levels = linspace(range.lo, range.hi, 5);
            os << "lambda,T,w\n";
            for (double lam : levels) {
                const SurfaceParams sp{slice_of(base), lam};
                for (double T : linspace(0.0, 1.0, cfg.sweep_points)) {
                    os << num(lam) << ',' << num(T) << ',' << num(total_variance_surface(0.0, T, sp)) << '\n';
                }
            }
        } else {
            const auto levels = linspace(range.lo, range.hi, 5);
            os << f << ",k,w\n";
            for (double lv : levels) {
                auto p = base;
                p[f] = lv;
                const SviSlice s = slice_of(p);
                for (double k : linspace(-1.0, 1.0, cfg.sweep_points)) {
                    os << num(lv) << ',' << num(k) << ',' << num(total_variance_slice(k, s)) << '\n';
                }
            }
        }
        written.push_back(path);
        say(log, "wrote " + path.string());
    }

    if (kind == SweepKind::Surface && !factors.empty()) {
        // Gridded surface and local variance at the American-put baseline surface.
        const auto ab = sweep_baseline(SweepKind::AmPut);
        const SurfaceParams sp{slice_of(ab), ab.at("lambda")};
        const int n = cfg.sweep_points;
        {
            const fs::path path = dir / "surface_total_variance.csv";
            auto os = open_out(path);
            os << "k,T,w\n";
            for (double T : linspace(1.0 / n, 1.0, n)) {
                for (double k : linspace(-1.0, 1.0, n)) {
                    os << num(k) << ',' << num(T) << ',' << num(total_variance_surface(k, T, sp)) << '\n';
                }
            }
            written.push_back(path);
        }
        {
            const fs::path path = dir / "surface_local_variance.csv";
            const auto s_axis = linspace(0.5, 1.5, n);
            const auto t_axis = linspace(1.0 / n, 1.0, n);
            const LocalVarianceGrid lv = local_variance_grid(sp, 1.0, 0.0, s_axis, t_axis, DenominatorPolicy::Clamp);
            auto os = open_out(path);
            os << "S,t,local_variance\n";
            for (std::size_t it = 0; it < t_axis.size(); ++it) {
                for (std::size_t is = 0; is < s_axis.size(); ++is) {
                    os << num(s_axis[is]) << ',' << num(t_axis[it]) << ',' << num(lv.at(it, is)) << '\n';
                }
            }
            written.push_back(path);
        }
    }
    return written;
}

PdeSolution cmd_solve(const SolveRequest& req, const Logger& log) {
    const auto start = Clock::now();
    PdeSolution sol = solve(req.problem, req.grid, req.psor);
    const double seconds = seconds_since(start);
    const Greeks& g = sol.spot_greeks;
    say(log, "V=" + num(g.value) + " delta=" + num(g.delta) + " gamma=" + num(g.gamma) + " theta=" + num(g.theta));
    if (req.out.empty()) return sol;

    const PdeProblem& p = req.problem;
    write_json(req.out / "solve.json",
               {{"payoff", p.payoff == PayoffKind::Put ? "put" : "call"},
                {"exercise", p.exercise == ExerciseStyle::American ? "american" : "european"},
                {"strike", p.strike}, {"rate", p.rate}, {"maturity", p.maturity}, {"spot", p.spot},
                {"grid", format_grid(req.grid)}, {"s_max", sol.grid.s_max},
                {"greeks", {{"V", g.value}, {"delta", g.delta}, {"gamma", g.gamma}, {"theta", g.theta}}},
                {"psor_sweeps", sol.psor_sweeps}, {"seconds", seconds}});

    const std::size_t n_nodes = sol.s_values.size();
    const std::vector<double> gamma = gamma_lattice(sol);
    {
        auto os = open_out(req.out / "slice_t0.csv");
        os << "S,V,delta,gamma\n";
        const auto v0 = sol.level(0);
        for (std::size_t i = 1; i + 1 < n_nodes; ++i) {
            const double delta = (v0[i + 1] - v0[i - 1]) / (2.0 * sol.grid.ds);
            os << num(sol.s_values[i]) << ',' << num(v0[i]) << ',' << num(delta) << ',' << num(gamma[i]) << '\n';
        }
    }
    {
        auto os = open_out(req.out / "boundary.csv");
        os << "t,exercise_boundary\n";
        for (std::size_t n = 0; n < sol.t_values.size(); ++n) {
            os << num(sol.t_values[n]) << ',' << num(sol.exercise_boundary[n]) << '\n';
        }
    }
    {
        // Gamma blows up at expiry; the last 2% of time levels are left out.
        auto os = open_out(req.out / "gamma_heatmap.csv");
        os << "t,S,gamma\n";
        const double cutoff = 0.98 * p.maturity;
        for (std::size_t n = 0; n < sol.t_values.size(); ++n) {
            if (sol.t_values[n] > cutoff) break;
            for (std::size_t i = 1; i + 1 < n_nodes; ++i) {
                os << num(sol.t_values[n]) << ',' << num(sol.s_values[i]) << ',' << num(gamma[n * n_nodes + i]) << '\n';
            }
        }
    }
    say(log, "wrote lattice exports to " + req.out.string());
    return sol;
}

void cmd_run(const RunConfig& cfg, const Logger& log) {
    cmd_gen(cfg, log);
    cmd_train(cfg, log);
    cmd_eval(cfg, log);
    cmd_bench(cfg, log);
}

}  // namespace fastval
