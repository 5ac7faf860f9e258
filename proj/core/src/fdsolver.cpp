#include "fastval/fdsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "fastval/errors.hpp"

namespace fastval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Rows whose complementarity residual exceeds this are reported as exercised.
constexpr double kExerciseResidual = 1e-12;

void validate_problem(const PdeProblem& p) {
    if (!(p.strike > 0.0) || !std::isfinite(p.strike)) fail(ErrorCode::InvalidParameter, "strike must be > 0");
    if (!(p.maturity > 0.0) || !std::isfinite(p.maturity)) fail(ErrorCode::ZeroMaturity, "maturity must be > 0");
    if (!(p.spot > 0.0) || !std::isfinite(p.spot)) fail(ErrorCode::InvalidParameter, "spot must be > 0");
    if (!std::isfinite(p.rate)) fail(ErrorCode::InvalidParameter, "rate must be finite");
    if (const auto* flat = std::get_if<FlatLocalVariance>(&p.local_variance)) {
        if (!(flat->value >= 0.0) || !std::isfinite(flat->value)) {
            fail(ErrorCode::InvalidParameter, "flat local variance must be >= 0");
        }
    }
}

// Fills the local variance at interior nodes and assembles the operator for
// one time level.
class OperatorBuilder {
public:
    OperatorBuilder(const PdeProblem& problem, const ResolvedGrid& grid)
        : problem_(problem), grid_(grid), sigma2_(static_cast<std::size_t>(grid.n_s - 1)) {
        if (const auto* surf = std::get_if<SurfaceLocalVariance>(&problem.local_variance)) {
            std::vector<double> nodes(sigma2_.size());
            for (std::size_t j = 0; j < nodes.size(); ++j) nodes[j] = node(j + 1);
            row_.emplace(surf->params, problem.spot, problem.rate, nodes, surf->policy);
        }
    }

    void build(double t, TridiagonalOperator& op) {
        fill_local_variance(t);
        const std::size_t m = sigma2_.size();
        op.lower.resize(m);
        op.diag.resize(m);
        op.upper.resize(m);
        op.beta.assign(m, 0.0);
        const double r = problem_.rate;
        for (std::size_t j = 0; j < m; ++j) {
            // With S_i = i ds the ds factors cancel: a = sigma^2 i^2 / 2, b = r i / 2.
            const double i = static_cast<double>(j + 1);
            const double a = 0.5 * sigma2_[j] * i * i;
            const double b = 0.5 * r * i;
            op.lower[j] = a - b;
            op.diag[j] = -2.0 * a - r;
            op.upper[j] = a + b;
        }
        const auto [lo, hi] = boundary_values(problem_, grid_, t);
        op.boundary_low = lo;
        op.boundary_high = hi;
        op.beta.front() += op.lower.front() * lo;
        op.beta.back() += op.upper.back() * hi;
    }

private:
    double node(std::size_t i) const {
        return i == static_cast<std::size_t>(grid_.n_s) ? grid_.s_max : static_cast<double>(i) * grid_.ds;
    }

    void fill_local_variance(double t) {
        const auto& src = problem_.local_variance;
        if (const auto* flat = std::get_if<FlatLocalVariance>(&src)) {
            std::fill(sigma2_.begin(), sigma2_.end(), flat->value);
        } else if (const auto* grid = std::get_if<LocalVarianceGrid>(&src)) {
            for (std::size_t j = 0; j < sigma2_.size(); ++j) sigma2_[j] = grid->interpolate(node(j + 1), t);
        } else {
            row_->evaluate(t, sigma2_);
        }
    }

    const PdeProblem& problem_;
    const ResolvedGrid& grid_;
    std::vector<double> sigma2_;
    std::optional<LocalVarianceRow> row_;
};

double time_of_half_index(double maturity, int half_index, int n_t) {
    return std::min(maturity, maturity * static_cast<double>(half_index) / (2.0 * n_t));
}

}  // namespace

ResolvedGrid resolve_grid(const PdeProblem& problem, const GridSpec& spec) {
    validate_problem(problem);
    if (spec.n_s < 16 || spec.n_t < 16) fail(ErrorCode::InvalidParameter, "grid needs n_s, n_t >= 16");
    if (!(spec.theta >= 0.0 && spec.theta <= 1.0)) fail(ErrorCode::InvalidParameter, "theta must lie in [0, 1]");
    if (spec.rannacher_steps < 0 || spec.rannacher_steps % 2 != 0 || spec.rannacher_steps / 2 >= spec.n_t) {
        fail(ErrorCode::InvalidParameter, "rannacher_steps must be even and shorter than the time grid");
    }
    ResolvedGrid g;
    g.n_s = spec.n_s;
    g.n_t = spec.n_t;
    g.s_max = spec.s_max > 0.0 ? spec.s_max : 3.0 * std::max(problem.strike, problem.spot);
    if (!(g.s_max > problem.strike) || !(g.s_max > problem.spot)) {
        fail(ErrorCode::InvalidParameter, "s_max must exceed the strike and the spot");
    }
    g.ds = g.s_max / g.n_s;
    g.dt = problem.maturity / g.n_t;
    g.theta = spec.theta;
    g.rannacher_steps = spec.rannacher_steps;
    return g;
}

double payoff(PayoffKind kind, double s, double strike) noexcept {
    return kind == PayoffKind::Put ? std::max(strike - s, 0.0) : std::max(s - strike, 0.0);
}

std::pair<double, double> boundary_values(const PdeProblem& p, const ResolvedGrid& g, double t) {
    const double discounted = p.strike * std::exp(-p.rate * (p.maturity - t));
    if (p.payoff == PayoffKind::Put) {
        const double low = p.exercise == ExerciseStyle::American ? p.strike : discounted;
        return {low, 0.0};
    }
    return {0.0, g.s_max - discounted};
}

TridiagonalOperator build_operator(const PdeProblem& problem, const GridSpec& grid, double t) {
    const ResolvedGrid g = resolve_grid(problem, grid);
    if (!(t >= 0.0 && t <= problem.maturity)) fail(ErrorCode::InvalidParameter, "t outside [0, T]");
    OperatorBuilder builder(problem, g);
    TridiagonalOperator op;
    builder.build(t, op);
    return op;
}

ThetaSystem assemble_step(std::span<const double> v, const TridiagonalOperator& late,
                          const TridiagonalOperator& early, double dt, double theta) {
    const std::size_t m = v.size();
    if (late.diag.size() != m || early.diag.size() != m || m == 0) {
        fail(ErrorCode::DimensionMismatch, "operator and value vector sizes differ");
    }
    ThetaSystem sys;
    sys.lower.resize(m);
    sys.diag.resize(m);
    sys.upper.resize(m);
    sys.rhs.resize(m);
    const double implicit = theta * dt;
    const double explicit_w = (1.0 - theta) * dt;
    for (std::size_t j = 0; j < m; ++j) {
        sys.lower[j] = -implicit * early.lower[j];
        sys.diag[j] = 1.0 - implicit * early.diag[j];
        sys.upper[j] = -implicit * early.upper[j];
        double av = late.diag[j] * v[j] + late.beta[j];
        if (j > 0) av += late.lower[j] * v[j - 1];
        if (j + 1 < m) av += late.upper[j] * v[j + 1];
        sys.rhs[j] = v[j] + explicit_w * av + implicit * early.beta[j];
    }
    return sys;
}

std::vector<double> thomas_solve(const ThetaSystem& s) {
    const std::size_t m = s.diag.size();
    std::vector<double> c(m), x(m);
    double pivot = s.diag[0];
    if (pivot == 0.0) fail(ErrorCode::SingularMatrix, "zero pivot in tridiagonal solve");
    c[0] = s.upper[0] / pivot;
    x[0] = s.rhs[0] / pivot;
    for (std::size_t j = 1; j < m; ++j) {
        pivot = s.diag[j] - s.lower[j] * c[j - 1];
        if (pivot == 0.0 || !std::isfinite(pivot)) fail(ErrorCode::SingularMatrix, "zero pivot in tridiagonal solve");
        c[j] = s.upper[j] / pivot;
        x[j] = (s.rhs[j] - s.lower[j] * x[j - 1]) / pivot;
    }
    for (std::size_t j = m - 1; j-- > 0;) x[j] -= c[j] * x[j + 1];
    return x;
}

std::vector<double> step(std::span<const double> v, const TridiagonalOperator& late,
                         const TridiagonalOperator& early, double dt, double theta) {
    return thomas_solve(assemble_step(v, late, early, dt, theta));
}

PsorResult psor_project(const ThetaSystem& s, std::span<const double> phi, const PsorSettings& settings,
                        std::span<const double> initial) {
    const std::size_t m = s.diag.size();
    if (phi.size() != m || initial.size() != m) fail(ErrorCode::DimensionMismatch, "PSOR vector sizes differ");
    if (!(settings.omega > 0.0 && settings.omega < 2.0)) fail(ErrorCode::InvalidParameter, "PSOR omega must lie in (0, 2)");

    PsorResult out;
    out.values.resize(m);
    for (std::size_t j = 0; j < m; ++j) out.values[j] = std::max(initial[j], phi[j]);
    std::vector<double>& v = out.values;
    const double omega = settings.omega;

    auto residual = [&] {
        double worst = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double mv = s.diag[j] * v[j];
            if (j > 0) mv += s.lower[j] * v[j - 1];
            if (j + 1 < m) mv += s.upper[j] * v[j + 1];
            worst = std::max(worst, std::abs(std::min(mv - s.rhs[j], v[j] - phi[j])));
        }
        return worst;
    };

    out.residual = residual();
    while (out.residual >= settings.tol) {
        if (out.iterations >= settings.max_iter) {
            fail(ErrorCode::NonConvergence, "PSOR did not converge in " + std::to_string(settings.max_iter) +
                                                " sweeps (residual " + std::to_string(out.residual) + ")");
        }
        for (std::size_t j = 0; j < m; ++j) {
            double off = 0.0;
            if (j > 0) off += s.lower[j] * v[j - 1];
            if (j + 1 < m) off += s.upper[j] * v[j + 1];
            const double gs = (s.rhs[j] - off) / s.diag[j];
            v[j] = std::max(phi[j], v[j] + omega * (gs - v[j]));
        }
        ++out.iterations;
        out.residual = residual();
    }

    out.exercised.assign(m, 0);
    for (std::size_t j = 0; j < m; ++j) {
        if (phi[j] <= 0.0 || v[j] > phi[j]) continue;
        double mv = s.diag[j] * v[j];
        if (j > 0) mv += s.lower[j] * v[j - 1];
        if (j + 1 < m) mv += s.upper[j] * v[j + 1];
        if (mv - s.rhs[j] > kExerciseResidual) out.exercised[j] = 1;
    }
    return out;
}

PdeSolution solve(const PdeProblem& problem, const GridSpec& spec, const PsorSettings& psor) {
    PdeSolution sol;
    sol.grid = resolve_grid(problem, spec);
    const ResolvedGrid& g = sol.grid;
    const std::size_t n_nodes = static_cast<std::size_t>(g.n_s) + 1;
    const std::size_t m = n_nodes - 2;
    const bool american = problem.exercise == ExerciseStyle::American;
    const double T = problem.maturity;

    sol.s_values.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) sol.s_values[i] = static_cast<double>(i) * g.ds;
    sol.s_values.back() = g.s_max;
    sol.t_values.resize(static_cast<std::size_t>(g.n_t) + 1);
    for (int n = 0; n <= g.n_t; ++n) sol.t_values[static_cast<std::size_t>(n)] = time_of_half_index(T, 2 * n, g.n_t);
    sol.values.assign(sol.t_values.size() * n_nodes, 0.0);
    sol.exercise_boundary.assign(sol.t_values.size(), kNaN);

    std::vector<double> phi(m);
    for (std::size_t j = 0; j < m; ++j) phi[j] = payoff(problem.payoff, sol.s_values[j + 1], problem.strike);

    auto store_level = [&](std::size_t n, std::span<const double> interior, double lo, double hi) {
        double* row = sol.values.data() + n * n_nodes;
        row[0] = lo;
        std::copy(interior.begin(), interior.end(), row + 1);
        row[n_nodes - 1] = hi;
    };

    std::vector<double> v(phi);
    double* terminal = sol.values.data() + static_cast<std::size_t>(g.n_t) * n_nodes;
    for (std::size_t i = 0; i < n_nodes; ++i) terminal[i] = payoff(problem.payoff, sol.s_values[i], problem.strike);

    OperatorBuilder builder(problem, g);
    TridiagonalOperator late, early;
    builder.build(T, late);

    int idx = 2 * g.n_t;
    while (idx > 0) {
        const bool implicit_startup = (2 * g.n_t - idx) < g.rannacher_steps;
        const int next = implicit_startup ? idx - 1 : idx - 2;
        const double dt = implicit_startup ? 0.5 * g.dt : g.dt;
        const double theta = implicit_startup ? 1.0 : g.theta;
        builder.build(time_of_half_index(T, next, g.n_t), early);

        const ThetaSystem sys = assemble_step(v, late, early, dt, theta);
        std::vector<char> exercised;
        if (american) {
            const std::vector<double> unconstrained = thomas_solve(sys);
            PsorResult res = psor_project(sys, phi, psor, unconstrained);
            sol.psor_sweeps += res.iterations;
            v = std::move(res.values);
            exercised = std::move(res.exercised);
        } else {
            v = thomas_solve(sys);
        }

        idx = next;
        std::swap(late, early);
        if (idx % 2 == 0) {
            const std::size_t level = static_cast<std::size_t>(idx / 2);
            store_level(level, v, late.boundary_low, late.boundary_high);
            if (!exercised.empty()) {
                double boundary = kNaN;
                if (problem.payoff == PayoffKind::Put) {
                    for (std::size_t j = m; j-- > 0;) {
                        if (exercised[j]) { boundary = sol.s_values[j + 1]; break; }
                    }
                } else {
                    for (std::size_t j = 0; j < m; ++j) {
                        if (exercised[j]) { boundary = sol.s_values[j + 1]; break; }
                    }
                }
                sol.exercise_boundary[level] = boundary;
            }
        }
    }

    sol.spot_greeks = greeks_at(sol, problem.spot);
    return sol;
}

Greeks greeks_at(const PdeSolution& sol, double s0) {
    const ResolvedGrid& g = sol.grid;
    if (!(s0 >= 0.0) || !std::isfinite(s0)) fail(ErrorCode::SpotOutOfGrid, "spot must be finite and >= 0");
    const double pos = s0 / g.ds;
    const long i = static_cast<long>(std::floor(pos));
    if (i < 1 || i + 1 > g.n_s - 1) {
        fail(ErrorCode::SpotOutOfGrid, "spot " + std::to_string(s0) + " is not inside the grid interior");
    }
    const double w = pos - static_cast<double>(i);
    const auto v0 = sol.level(0);
    const auto v1 = sol.level(1);
    const double ds = g.ds;

    auto at_node = [&](long k) {
        const auto u = static_cast<std::size_t>(k);
        Greeks n;
        n.value = v0[u];
        n.delta = (v0[u + 1] - v0[u - 1]) / (2.0 * ds);
        n.gamma = (v0[u + 1] - 2.0 * v0[u] + v0[u - 1]) / (ds * ds);
        n.theta = (v1[u] - v0[u]) / g.dt;
        return n;
    };
    const Greeks a = at_node(i);
    const Greeks b = at_node(i + 1);
    auto lerp = [w](double x, double y) { return (1.0 - w) * x + w * y; };
    return {lerp(a.value, b.value), lerp(a.delta, b.delta), lerp(a.gamma, b.gamma), lerp(a.theta, b.theta)};
}

std::vector<double> gamma_lattice(const PdeSolution& sol) {
    const std::size_t n_nodes = sol.s_values.size();
    const double ds2 = sol.grid.ds * sol.grid.ds;
    std::vector<double> out(sol.values.size(), 0.0);
    for (std::size_t n = 0; n < sol.t_values.size(); ++n) {
        const auto v = sol.level(n);
        for (std::size_t i = 1; i + 1 < n_nodes; ++i) {
            out[n * n_nodes + i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / ds2;
        }
    }
    return out;
}

}  // namespace fastval
