#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fastval/errors.hpp"
#include "fastval/pipeline.hpp"

namespace {

using namespace fastval;

struct Options {
    std::string mode;
    std::string config;
    std::string out;
    std::vector<std::string> grids;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> count;
    std::optional<std::size_t> train_count;
    std::optional<std::size_t> test_count;
    std::optional<unsigned> threads;
    std::optional<double> budget;
    std::optional<int> repeats;
    std::optional<std::string> factors;
    std::optional<int> points;
    bool quiet = false;

    // solve
    std::string payoff = "put";
    std::string style = "american";
    double strike = 1.0;
    double rate = 0.05;
    double maturity = 1.0;
    double spot = 1.0;
    double variance = 0.03;
    std::string surface;
    std::string policy = "clamp";
};

void print_error(const std::string& code, const std::string& message) {
    std::cerr << "error: " << nlohmann::json{{"code", code}, {"message", message}}.dump() << '\n';
}

nlohmann::json load_config_file(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream is(path);
    if (!is) fail(ErrorCode::Io, "cannot open config " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidParameter, "config " + path + ": " + e.what());
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Config file first, then command-line overrides.
RunConfig build_config(const Options& o, bool grid_is_bench, std::optional<Mode> forced_mode = std::nullopt) {
    nlohmann::json j = load_config_file(o.config);
    std::optional<Mode> mode = forced_mode;
    if (!mode && !o.mode.empty()) mode = parse_mode(o.mode);
    RunConfig cfg = RunConfig::from_json(j, mode);
    if (!o.out.empty()) cfg.out = o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.count) cfg.train_count = cfg.test_count = *o.count;
    if (o.train_count) cfg.train_count = *o.train_count;
    if (o.test_count) cfg.test_count = *o.test_count;
    if (o.threads) cfg.solver.threads = *o.threads;
    if (o.budget) cfg.bench_budget_seconds = *o.budget;
    if (o.repeats) cfg.bench_repeats = *o.repeats;
    if (o.factors) cfg.factors = split_list(*o.factors);
    if (o.points) cfg.sweep_points = *o.points;
    if (!o.grids.empty()) {
        if (grid_is_bench) {
            cfg.bench_grids.clear();
            for (const auto& g : o.grids) cfg.bench_grids.push_back(parse_grid(g));
        } else {
            const GridSpec g = parse_grid(o.grids.back());
            cfg.solver.grid.n_s = g.n_s;
            cfg.solver.grid.n_t = g.n_t;
        }
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, Options& o, bool with_mode = true) {
    if (with_mode) cmd->add_option("--mode", o.mode, "varswap or amput");
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "training seed (test split uses seed + 1)");
    cmd->add_flag("--quiet", o.quiet, "suppress progress messages");
}

PdeProblem build_problem(const Options& o) {
    PdeProblem p;
    if (o.payoff == "put") p.payoff = PayoffKind::Put;
    else if (o.payoff == "call") p.payoff = PayoffKind::Call;
    else fail(ErrorCode::InvalidParameter, "payoff must be put or call");
    if (o.style == "american") p.exercise = ExerciseStyle::American;
    else if (o.style == "european") p.exercise = ExerciseStyle::European;
    else fail(ErrorCode::InvalidParameter, "style must be american or european");
    p.strike = o.strike;
    p.rate = o.rate;
    p.maturity = o.maturity;
    p.spot = o.spot;
    if (o.surface.empty()) {
        p.local_variance = FlatLocalVariance{o.variance};
    } else {
        std::vector<double> v;
        for (const auto& s : split_list(o.surface)) v.push_back(std::stod(s));
        if (v.size() != 6) fail(ErrorCode::InvalidParameter, "--surface takes a_prime,b,rho,m,sigma,lambda");
        DenominatorPolicy policy = DenominatorPolicy::Clamp;
        if (o.policy == "throw") policy = DenominatorPolicy::Throw;
        else if (o.policy != "clamp") fail(ErrorCode::InvalidParameter, "policy must be clamp or throw");
        SurfaceParams sp{{v[0], v[1], v[2], v[3], v[4]}, v[5]};
        sp.validate();
        p.local_variance = SurfaceLocalVariance{sp, policy};
    }
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fastval: volatility-surface pricers and Gaussian-process surrogates"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen", "generate train and test datasets");
    add_common(gen, o);
    gen->add_option("--grid", o.grids, "PDE grid NxM for American-put ground truth");
    gen->add_option("--count", o.count, "rows in both splits");
    gen->add_option("--train-count", o.train_count, "training rows");
    gen->add_option("--test-count", o.test_count, "test rows");
    gen->add_option("--threads", o.threads, "pricing threads (0 = all cores)");

    auto* train = app.add_subcommand("train", "fit one GPR per target and export LML landscapes");
    add_common(train, o);

    auto* eval = app.add_subcommand("eval", "score the models on the test split");
    add_common(eval, o);

    auto* bench = app.add_subcommand("bench", "time GPR prediction against the ground-truth pricer");
    add_common(bench, o);
    bench->add_option("--grid", o.grids, "Crank-Nicolson grids to time (repeatable)");
    bench->add_option("--budget", o.budget, "seconds per pricer before extrapolating");
    bench->add_option("--repeats", o.repeats, "GPR timing repeats");

    auto* run = app.add_subcommand("run", "gen, train, eval and bench in one go");
    add_common(run, o);
    run->add_option("--count", o.count, "rows in both splits");
    run->add_option("--threads", o.threads, "pricing threads (0 = all cores)");

    auto* sens = app.add_subcommand("sensitivity", "one-at-a-time sweeps (varswap, amput or surface)");
    add_common(sens, o, false);
    sens->add_option("--mode", o.mode, "varswap, amput or surface");
    sens->add_option("--grid", o.grids, "PDE grid NxM for amput sweeps");
    sens->add_option("--factors", o.factors, "comma-separated factors; empty string sweeps nothing");
    sens->add_option("--points", o.points, "points per sweep");

    auto* solve_cmd = app.add_subcommand("solve", "price one contract and export the lattice");
    solve_cmd->add_option("--out", o.out, "directory for lattice exports");
    solve_cmd->add_option("--grid", o.grids, "grid NxM (default 500x500)");
    solve_cmd->add_option("--payoff", o.payoff, "put or call");
    solve_cmd->add_option("--style", o.style, "american or european");
    solve_cmd->add_option("--strike", o.strike, "strike K");
    solve_cmd->add_option("--rate", o.rate, "interest rate r");
    solve_cmd->add_option("--maturity", o.maturity, "maturity T");
    solve_cmd->add_option("--spot", o.spot, "spot S0");
    solve_cmd->add_option("--variance", o.variance, "flat local variance");
    solve_cmd->add_option("--surface", o.surface, "a_prime,b,rho,m,sigma,lambda (overrides --variance)");
    solve_cmd->add_option("--policy", o.policy, "clamp or throw on Dupire denominator violations");
    solve_cmd->add_flag("--quiet", o.quiet, "suppress progress messages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0) print_error("usage", e.what());
        return app.exit(e);
    }

    const Logger log = [&](const std::string& msg) {
        if (!o.quiet) std::cerr << "[fastval] " << msg << '\n';
    };

    try {
        if (gen->parsed()) {
            cmd_gen(build_config(o, false), log);
        } else if (train->parsed()) {
            cmd_train(build_config(o, false), log);
        } else if (eval->parsed()) {
            const EvalReport r = cmd_eval(build_config(o, false), log);
            std::cout << r.to_json().dump(2) << '\n';
        } else if (bench->parsed()) {
            const BenchReport r = cmd_bench(build_config(o, true), log);
            std::cout << r.to_json().dump(2) << '\n';
        } else if (run->parsed()) {
            cmd_run(build_config(o, false), log);
        } else if (sens->parsed()) {
            const SweepKind kind = parse_sweep_kind(o.mode.empty() ? "varswap" : o.mode);
            const std::optional<Mode> cfg_mode =
                kind == SweepKind::AmPut ? std::optional<Mode>(Mode::AmPut) : std::optional<Mode>(Mode::VarSwap);
            const auto files = cmd_sensitivity(build_config(o, false, cfg_mode), kind, log);
            for (const auto& f : files) std::cout << f.string() << '\n';
        } else if (solve_cmd->parsed()) {
            SolveRequest req;
            req.problem = build_problem(o);
            if (!o.grids.empty()) {
                const GridSpec g = parse_grid(o.grids.back());
                req.grid.n_s = g.n_s;
                req.grid.n_t = g.n_t;
            }
            req.out = o.out;
            const PdeSolution sol = cmd_solve(req, log);
            const Greeks& g = sol.spot_greeks;
            std::cout << nlohmann::json{{"V", g.value}, {"delta", g.delta}, {"gamma", g.gamma}, {"theta", g.theta}}.dump(2)
                      << '\n';
        }
    } catch (const Error& e) {
        print_error(std::string(to_string(e.code())), e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 3;
    }
    return 0;
}
