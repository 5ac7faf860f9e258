#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fastval/fdsolver.hpp"
#include "fastval/gpr.hpp"
#include "fastval/varswap.hpp"

namespace fastval {

enum class Mode { VarSwap, AmPut };
enum class Split { Train, Test };

/// "varswap" / "amput"; parse_mode throws ErrorCode::UnknownMode.
std::string_view to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view name);
std::string_view to_string(Split split) noexcept;

/// Input columns in file order: a_prime, b, rho, m, sigma, [lambda, K,] r.
const std::vector<std::string>& input_columns(Mode mode);
/// K_var, or V, delta, gamma, theta.
const std::vector<std::string>& target_columns(Mode mode);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Uniform sampling bounds per input factor, in input_columns() order.
struct RangeSpec {
    std::vector<std::string> names;
    std::vector<Interval> train;
    std::vector<Interval> test;

    static RangeSpec defaults(Mode mode);

    /// Bounds ordered, test nested in train, one entry per factor.
    void validate() const;
    const std::vector<Interval>& bounds(Split split) const { return split == Split::Train ? train : test; }

    nlohmann::json to_json() const;
    /// Overrides named factors of `base`, e.g. {"rho": {"train": [lo, hi]}}.
    static RangeSpec merge(const RangeSpec& base, const nlohmann::json& overrides);
};

/// Ground-truth pricer settings used during generation.
struct SolverConfig {
    GridSpec grid{200, 200};
    PsorSettings psor;
    QuadratureSettings quadrature;
    double max_drop_rate = 0.05;            // solver failures
    double max_arbitrage_drop_rate = 0.6;   // butterfly-violating surfaces
    unsigned threads = 0;  // 0 = hardware concurrency

    nlohmann::json to_json() const;
    static SolverConfig from_json(const nlohmann::json& j);
};

/// One draw of risk factors and its ground-truth targets.
struct ValuationRecord {
    std::vector<double> x;
    std::vector<double> y;

    bool operator==(const ValuationRecord&) const = default;
};

struct Dataset {
    Mode mode = Mode::VarSwap;
    std::vector<ValuationRecord> records;
    nlohmann::json meta;  // seed, generator, ranges, solver config, drop counts

    Eigen::MatrixXd inputs() const;
    Eigen::MatrixXd targets() const;

    bool operator==(const Dataset&) const = default;
};

/// Portable uniform stream: mt19937_64, u = (word >> 11) * 2^-53 in [0, 1).
class UniformStream {
public:
    explicit UniformStream(std::uint64_t seed);
    double next();

private:
    std::mt19937_64 engine_;
};

inline constexpr std::string_view kGeneratorName = "mt19937_64/u53";

/// Draws `count` input vectors, row by row and factor by factor.
std::vector<std::vector<double>> sample(Mode mode, Split split, std::size_t count, std::uint64_t seed,
                                        const RangeSpec& ranges);
std::vector<std::vector<double>> sample(Mode mode, Split split, std::size_t count, std::uint64_t seed);

/// Splits an input row into model parameters.
VarSwapInputs varswap_inputs(std::span<const double> x);
PdeProblem amput_problem(std::span<const double> x, DenominatorPolicy policy = DenominatorPolicy::Throw);

/// Targets for one input row; throws the pricer's error on failure.
std::vector<double> price_record(Mode mode, std::span<const double> x, const SolverConfig& solver);

struct GenerateOptions {
    Mode mode = Mode::VarSwap;
    Split split = Split::Train;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    RangeSpec ranges;
    SolverConfig solver;
    std::function<void(std::size_t attempt, const std::string& reason)> on_drop;
};

/**
 * Draws candidates from the seeded stream and prices them in parallel; rows the
 * pricer rejects are dropped and replaced by further draws until `count` rows
 * exist. Rows keep stream order, so the result does not depend on the thread
 * count. Surfaces whose Dupire denominator is non-positive somewhere on the
 * PDE grid are counted separately from other pricer failures; either share of
 * the attempts exceeding its limit throws ErrorCode::ExcessiveDropRate.
 */
Dataset generate(const GenerateOptions& options);

/// CSV with a leading "# fastval-dataset v1 {json}" line and a header row;
/// values printed with 17 significant digits.
void write_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_csv(const std::filesystem::path& path);

/// Err = <|pred - truth|> / |<truth>|.
double relative_error(std::span<const double> truth, std::span<const double> pred);

struct EvalReport {
    Mode mode = Mode::VarSwap;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::map<std::string, double> err;
    double timing_seconds = 0.0;
    std::uint64_t seed = 0;
    nlohmann::json config;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

struct Evaluation {
    EvalReport report;
    Eigen::MatrixXd predictions;  // one column per target
};

/// Predicts every test row with the per-target models (ordered as
/// target_columns(mode)) and scores them.
Evaluation evaluate(const std::vector<TrainedGpr>& models, const Dataset& test);

}  // namespace fastval
