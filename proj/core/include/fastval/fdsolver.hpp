#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "fastval/volsurface.hpp"

namespace fastval {

enum class PayoffKind { Put, Call };
enum class ExerciseStyle { American, European };

/// Uniform (S, t) lattice for the theta-scheme.
struct GridSpec {
    int n_s = 500;             // price intervals
    int n_t = 500;             // time steps
    double s_max = 0.0;        // <= 0 selects 3 * max(K, S0)
    double theta = 0.5;        // 0.5 = Crank-Nicolson
    int rannacher_steps = 4;   // half-length fully implicit sub-steps replacing the first full steps
};

struct PsorSettings {
    double omega = 1.2;
    double tol = 1e-8;  // max-norm of the projected residual
    int max_iter = 10000;
};

struct FlatLocalVariance {
    double value = 0.04;
};

/// Local variance read off an SVI surface at each grid node and time level.
struct SurfaceLocalVariance {
    SurfaceParams params;
    DenominatorPolicy policy = DenominatorPolicy::Clamp;
};

using LocalVarianceSource = std::variant<FlatLocalVariance, LocalVarianceGrid, SurfaceLocalVariance>;

struct PdeProblem {
    PayoffKind payoff = PayoffKind::Put;
    ExerciseStyle exercise = ExerciseStyle::American;
    double strike = 1.0;
    double rate = 0.0;
    double maturity = 1.0;
    double spot = 1.0;
    LocalVarianceSource local_variance = FlatLocalVariance{};
};

/// Grid resolved against a problem: S_i = i * ds for i = 0..n_s, t_n = n * dt.
struct ResolvedGrid {
    int n_s = 0;
    int n_t = 0;
    double s_max = 0.0;
    double ds = 0.0;
    double dt = 0.0;
    double theta = 0.5;
    int rannacher_steps = 0;
};

/// Validates the grid against the problem (n_s, n_t >= 16, s_max > K and S0,
/// theta in [0, 1], an even Rannacher count shorter than the time grid).
ResolvedGrid resolve_grid(const PdeProblem& problem, const GridSpec& grid);

double payoff(PayoffKind kind, double s, double strike) noexcept;

/// Discretised spatial operator L = 1/2 sigma^2 S^2 d2/dS2 + r S d/dS - r on
/// the interior nodes 1..n_s-1 (row j holds node j+1), together with the
/// vector beta that carries the Dirichlet values: (L V)_int = A V_int + beta.
struct TridiagonalOperator {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;
    std::vector<double> beta;
    double boundary_low = 0.0;   // V(0, t)
    double boundary_high = 0.0;  // V(S_max, t)
};

/// Dirichlet values at time t. Puts: V(0) = K for American, K e^{-r(T-t)} for
/// European; V(S_max) = 0. Calls: V(0) = 0; V(S_max) = S_max - K e^{-r(T-t)}.
std::pair<double, double> boundary_values(const PdeProblem& problem, const ResolvedGrid& grid, double t);

TridiagonalOperator build_operator(const PdeProblem& problem, const GridSpec& grid, double t);

/// Linear system (I - theta dt A_early) V_early = (I + (1-theta) dt A_late) V_late
///                                               + dt (theta beta_early + (1-theta) beta_late)
/// over the interior nodes.
struct ThetaSystem {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;
    std::vector<double> rhs;
};

/// `v_late_interior` holds the interior values only.
ThetaSystem assemble_step(std::span<const double> v_late_interior, const TridiagonalOperator& late,
                          const TridiagonalOperator& early, double dt, double theta);

/// Thomas algorithm; throws ErrorCode::SingularMatrix on a zero pivot.
std::vector<double> thomas_solve(const ThetaSystem& system);

/// One unconstrained theta step (European update).
std::vector<double> step(std::span<const double> v_late_interior, const TridiagonalOperator& late,
                         const TridiagonalOperator& early, double dt, double theta);

struct PsorResult {
    std::vector<double> values;
    std::vector<char> exercised;  // 1 where the payoff constraint binds
    int iterations = 0;
    double residual = 0.0;
};

/**
 * Projected SOR for the complementarity problem
 *   M V >= rhs,  V >= payoff,  (M V - rhs) . (V - payoff) = 0.
 * Iterates from `initial` (projected onto the payoff) until the max-norm of
 * min(M V - rhs, V - payoff) drops below tol. Throws ErrorCode::NonConvergence
 * after max_iter sweeps and ErrorCode::InvalidParameter unless omega in (0, 2).
 */
PsorResult psor_project(const ThetaSystem& system, std::span<const double> payoff_values,
                        const PsorSettings& settings, std::span<const double> initial);

struct Greeks {
    double value = 0.0;
    double delta = 0.0;
    double gamma = 0.0;
    double theta = 0.0;  // dV/dt in calendar time, per year
};

/// Option values on the full lattice plus the early-exercise boundary.
struct PdeSolution {
    ResolvedGrid grid;
    std::vector<double> s_values;   // n_s + 1 nodes
    std::vector<double> t_values;   // n_t + 1 levels, t_values[0] = 0
    std::vector<double> values;     // row-major by time level: values[n * (n_s+1) + i]
    std::vector<double> exercise_boundary;  // per level; NaN where nothing is exercised
    long psor_sweeps = 0;
    Greeks spot_greeks;

    std::span<const double> level(std::size_t n) const {
        return std::span<const double>(values).subspan(n * s_values.size(), s_values.size());
    }
};

/**
 * Backward march from t = T to t = 0: `rannacher_steps` fully implicit
 * half-steps, then theta-steps. American contracts are projected with PSOR
 * at every step. Greeks at the problem's spot are filled in.
 */
PdeSolution solve(const PdeProblem& problem, const GridSpec& grid = {}, const PsorSettings& psor = {});

/// V, Delta and Gamma from central differences on the t = 0 level, Theta from
/// (V(t=dt) - V(t=0)) / dt, each linearly interpolated between the nodes that
/// bracket s0. Throws ErrorCode::SpotOutOfGrid unless both nodes are interior.
Greeks greeks_at(const PdeSolution& solution, double s0);

/// Gamma at interior nodes for every time level, row-major like `values`
/// (boundary columns are zero).
std::vector<double> gamma_lattice(const PdeSolution& solution);

}  // namespace fastval
