#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fastval/dataset.hpp"
#include "fastval/fdsolver.hpp"
#include "fastval/gpr.hpp"

namespace fastval {

using Logger = std::function<void(const std::string&)>;

/// Parses "NxM" (or "N") into a grid with N price intervals and M time steps.
GridSpec parse_grid(const std::string& text);
std::string format_grid(const GridSpec& grid);

/**
 * Everything one pipeline run needs. Defaults depend on the mode: 2000 + 2000
 * rows for the variance swap, 5000 + 2000 for the American put. The training
 * split uses `seed`, the test split `seed + 1`.
 */
struct RunConfig {
    Mode mode = Mode::VarSwap;
    std::filesystem::path out = "runs/varswap";
    std::uint64_t seed = 20240501;
    std::size_t train_count = 2000;
    std::size_t test_count = 2000;
    RangeSpec ranges;
    SolverConfig solver;

    // Hyperparameter search; noise_grid {0} pins sigma_g.
    std::vector<double> length_grid;
    std::vector<double> noise_grid;
    bool refine = true;

    // Timing comparison.
    std::vector<GridSpec> bench_grids;
    double bench_budget_seconds = 300.0;  // wall-clock cap per grid before extrapolating
    int bench_repeats = 5;

    // One-at-a-time sweeps.
    std::optional<std::vector<std::string>> factors;  // unset = every factor of the mode
    int sweep_points = 50;
    nlohmann::json baseline;  // overrides of the default baseline, keyed by factor

    static RunConfig defaults(Mode mode);
    /// Defaults for j["mode"] (or `mode` when given) overridden by the keys in j.
    static RunConfig from_json(const nlohmann::json& j, std::optional<Mode> mode = std::nullopt);
    /// Every setting except `out`.
    nlohmann::json to_json() const;
    void validate() const;

    HyperSearch search() const;
};

struct GenSummary {
    Dataset train;
    Dataset test;
    double seconds = 0.0;
};

/// Writes train.csv, test.csv and manifest.json into cfg.out.
GenSummary cmd_gen(const RunConfig& cfg, const Logger& log = {});

struct TrainSummary {
    std::vector<FitResult> fits;  // one per target
    double seconds = 0.0;
};

/// Fits one model per target on train.csv. Writes models/<target>.gpr,
/// lml_<target>.csv (length_scale, noise, lml, is_argmax) and train_summary.json.
TrainSummary cmd_train(const RunConfig& cfg, const Logger& log = {});

std::vector<TrainedGpr> load_models(const std::filesystem::path& out, Mode mode);

/// Scores the models on test.csv; writes eval_report.json and
/// scatter_<target>.csv (truth, prediction).
EvalReport cmd_eval(const RunConfig& cfg, const Logger& log = {});

struct BenchRow {
    std::string method;        // "crank_nicolson" or "quadrature"
    std::string grid;          // "500x500"; empty for quadrature
    std::size_t solves = 0;    // solves actually timed
    double measured_seconds = 0.0;
    double seconds_per_valuation = 0.0;
    double extrapolated_seconds = 0.0;  // per valuation x number of test rows
    double speedup = 0.0;               // extrapolated_seconds / gpr_seconds
};

struct BenchReport {
    Mode mode = Mode::VarSwap;
    std::size_t n_queries = 0;
    std::size_t n_train = 0;
    double gpr_seconds = 0.0;  // median batch time for all targets
    std::vector<std::pair<std::size_t, double>> gpr_scaling;  // (queries, seconds)
    std::vector<BenchRow> rows;

    nlohmann::json to_json() const;
};

/// Times batch GPR prediction of the whole test set against the ground-truth
/// pricer. Each pricer runs on consecutive test rows until the time budget is
/// spent and its total is extrapolated to the full test set.
BenchReport cmd_bench(const RunConfig& cfg, const Logger& log = {});

enum class SweepKind { VarSwap, AmPut, Surface };
SweepKind parse_sweep_kind(const std::string& name);

/// Factors swept by default, in file order.
std::vector<std::string> sweep_factors(SweepKind kind);

/// Baseline point of each sweep, keyed by factor name.
std::map<std::string, double> sweep_baseline(SweepKind kind, const nlohmann::json& overrides = {});

/// Range swept for a factor.
Interval sweep_range(SweepKind kind, const std::string& factor);

/**
 * One-at-a-time sweeps with the ground-truth pricers, written to
 * cfg.out/sensitivity/<kind>_<factor>.csv. The surface kind also writes the
 * gridded total variance and local variance of the baseline surface. An empty
 * factor list writes nothing. Returns the files written.
 */
std::vector<std::filesystem::path> cmd_sensitivity(const RunConfig& cfg, SweepKind kind, const Logger& log = {});

struct SolveRequest {
    PdeProblem problem;
    GridSpec grid{500, 500};
    PsorSettings psor;
    std::filesystem::path out;  // empty = no lattice export
};

/**
 * Solves one contract and, when an output directory is given, writes
 * solve.json, slice_t0.csv (S, V, delta, gamma at t = 0), boundary.csv and
 * gamma_heatmap.csv (the final 2% of time levels omitted).
 */
PdeSolution cmd_solve(const SolveRequest& request, const Logger& log = {});

/// gen, train, eval and bench in sequence.
void cmd_run(const RunConfig& cfg, const Logger& log = {});

}  // namespace fastval
