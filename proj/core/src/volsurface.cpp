#include "fastval/volsurface.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fastval/errors.hpp"

namespace fastval {

namespace {

bool finite(double x) { return std::isfinite(x); }

void check_axis(std::span<const double> axis, const char* name) {
    if (axis.empty()) fail(ErrorCode::InvalidParameter, std::string(name) + " axis is empty");
    for (std::size_t i = 1; i < axis.size(); ++i) {
        if (!(axis[i] > axis[i - 1])) {
            fail(ErrorCode::InvalidParameter, std::string(name) + " axis must be strictly increasing");
        }
    }
}

// Locates the cell [i, i+1] containing x and the weight of node i+1.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double x) {
    if (axis.size() == 1 || x <= axis.front()) return {0, 0.0};
    if (x >= axis.back()) return {axis.size() - 2, 1.0};
    const auto it = std::upper_bound(axis.begin(), axis.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
    return {i, (x - axis[i]) / (axis[i + 1] - axis[i])};
}

}  // namespace

double SviSlice::raw_a() const noexcept {
    return a_prime - b * sigma * std::sqrt(1.0 - rho * rho);
}

SviSlice SviSlice::from_raw(double a, double b, double rho, double m, double sigma) {
    SviSlice s{0.0, b, rho, m, sigma};
    s.a_prime = a + b * sigma * std::sqrt(1.0 - rho * rho);
    return s;
}

void SviSlice::validate() const {
    if (!finite(a_prime) || !finite(b) || !finite(rho) || !finite(m) || !finite(sigma)) {
        fail(ErrorCode::InvalidParameter, "SVI parameters must be finite");
    }
    if (a_prime < 0.0) fail(ErrorCode::InvalidParameter, "SVI a' must be >= 0");
    if (b < 0.0) fail(ErrorCode::InvalidParameter, "SVI b must be >= 0");
    if (!(rho > -1.0 && rho < 1.0)) fail(ErrorCode::InvalidParameter, "SVI rho must lie in (-1, 1)");
    if (!(sigma > 0.0)) fail(ErrorCode::InvalidParameter, "SVI sigma must be > 0");
}

void SurfaceParams::validate() const {
    slice.validate();
    if (!finite(lambda) || lambda < 0.0 || lambda > 1.0 / kMaxMaturity) {
        fail(ErrorCode::InvalidParameter, "term-structure lambda must lie in [0, 1/T_max]");
    }
}

SliceDerivatives slice_derivatives(double k, const SviSlice& s) noexcept {
    const double u = k - s.m;
    const double root = std::sqrt(u * u + s.sigma * s.sigma);
    SliceDerivatives d;
    d.w = s.raw_a() + s.b * (s.rho * u + root);
    d.dw_dk = s.b * (s.rho + u / root);
    d.d2w_dk2 = s.b * s.sigma * s.sigma / (root * root * root);
    // Rounding in a = a' - b sigma sqrt(1 - rho^2) can leave w a few ulps below a'.
    d.w = std::max(d.w, 0.0);
    return d;
}

double total_variance_slice(double k, const SviSlice& slice) {
    slice.validate();
    if (!finite(k)) fail(ErrorCode::InvalidParameter, "log-moneyness must be finite");
    return slice_derivatives(k, slice).w;
}

namespace {

void check_term_args(double T, double lambda) {
    if (!(T >= 0.0 && T <= kMaxMaturity)) {
        fail(ErrorCode::InvalidParameter, "maturity must lie in [0, T_max]");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0 / kMaxMaturity)) {
        fail(ErrorCode::InvalidParameter, "term-structure lambda must lie in [0, 1/T_max]");
    }
}

}  // namespace

double term_factor(double T, double lambda) {
    check_term_args(T, lambda);
    return T * std::exp(lambda * (1.0 - T));
}

double term_factor_derivative(double T, double lambda) {
    check_term_args(T, lambda);
    return std::exp(lambda * (1.0 - T)) * (1.0 - lambda * T);
}

double total_variance_surface(double k, double T, const SurfaceParams& params) {
    params.validate();
    return total_variance_slice(k, params.slice) * term_factor(T, params.lambda);
}

SurfacePoint surface_point(double k, double T, const SurfaceParams& params) {
    params.validate();
    if (!finite(k)) fail(ErrorCode::InvalidParameter, "log-moneyness must be finite");
    const SliceDerivatives d = slice_derivatives(k, params.slice);
    const double f = term_factor(T, params.lambda);
    const double df = term_factor_derivative(T, params.lambda);
    return {d.w * f, d.dw_dk * f, d.d2w_dk2 * f, d.w * df};
}

double dupire_denominator(double k, const SurfacePoint& p) noexcept {
    const double w = p.w;
    const double wk = p.dw_dk;
    return 1.0 - (k / w) * wk - 0.25 * (0.25 + 1.0 / w - (k * k) / (w * w)) * wk * wk +
           0.5 * p.d2w_dk2;
}

double local_variance_from(double k, const SurfacePoint& p) {
    if (p.w < kDegenerateTotalVariance) return p.dw_dT;
    const double denom = dupire_denominator(k, p);
    if (!(denom > 0.0)) {
        fail(ErrorCode::ButterflyViolation,
             "Dupire denominator " + std::to_string(denom) + " <= 0 at k=" + std::to_string(k));
    }
    return p.dw_dT / denom;
}

double local_variance(double k, double T, const SurfaceParams& params) {
    return local_variance_from(k, surface_point(k, T, params));
}

double LocalVarianceGrid::interpolate(double s, double t) const {
    const auto [is, ws] = bracket(s_values, s);
    const auto [it, wt] = bracket(t_values, t);
    const std::size_t is1 = std::min(is + 1, s_values.size() - 1);
    const std::size_t it1 = std::min(it + 1, t_values.size() - 1);
    const double lo = (1.0 - ws) * at(it, is) + ws * at(it, is1);
    const double hi = (1.0 - ws) * at(it1, is) + ws * at(it1, is1);
    return (1.0 - wt) * lo + wt * hi;
}

LocalVarianceRow::LocalVarianceRow(const SurfaceParams& params, double s0, double rate,
                                   std::span<const double> s_nodes, DenominatorPolicy policy)
    : params_(params), log_s0_(0.0), rate_(rate), policy_(policy) {
    params.validate();
    if (!(s0 > 0.0) || !finite(s0)) fail(ErrorCode::InvalidParameter, "spot must be > 0");
    if (!finite(rate)) fail(ErrorCode::InvalidParameter, "rate must be finite");
    log_s0_ = std::log(s0);
    log_s_.reserve(s_nodes.size());
    for (double s : s_nodes) {
        if (!(s > 0.0)) fail(ErrorCode::InvalidParameter, "local-variance nodes need S > 0");
        log_s_.push_back(std::log(s));
    }
}

void LocalVarianceRow::evaluate(double t, std::span<double> out) const {
    if (out.size() != log_s_.size()) {
        fail(ErrorCode::DimensionMismatch, "local-variance row has the wrong length");
    }
    const double f = term_factor(t, params_.lambda);
    const double df = term_factor_derivative(t, params_.lambda);
    const double shift = log_s0_ + rate_ * t;
    for (std::size_t i = 0; i < log_s_.size(); ++i) {
        const double k = log_s_[i] - shift;
        const SliceDerivatives d = slice_derivatives(k, params_.slice);
        const SurfacePoint p{d.w * f, d.dw_dk * f, d.d2w_dk2 * f, d.w * df};
        double v;
        if (p.w < kDegenerateTotalVariance) {
            v = p.dw_dT;
        } else {
            const double denom = dupire_denominator(k, p);
            if (denom > 0.0) {
                v = p.dw_dT / denom;
            } else if (policy_ == DenominatorPolicy::Throw) {
                fail(ErrorCode::ButterflyViolation,
                     "Dupire denominator " + std::to_string(denom) + " <= 0 at k=" +
                         std::to_string(k) + ", t=" + std::to_string(t));
            } else {
                v = kLocalVarianceCap;
            }
        }
        out[i] = std::clamp(v, kLocalVarianceFloor, kLocalVarianceCap);
    }
}

LocalVarianceGrid local_variance_grid(const SurfaceParams& params, double s0, double rate,
                                      std::span<const double> s_axis,
                                      std::span<const double> t_axis, DenominatorPolicy policy) {
    check_axis(s_axis, "S");
    check_axis(t_axis, "t");
    const LocalVarianceRow row(params, s0, rate, s_axis, policy);
    LocalVarianceGrid grid;
    grid.s_values.assign(s_axis.begin(), s_axis.end());
    grid.t_values.assign(t_axis.begin(), t_axis.end());
    grid.values.resize(s_axis.size() * t_axis.size());
    for (std::size_t it = 0; it < t_axis.size(); ++it) {
        row.evaluate(t_axis[it],
                     std::span<double>(grid.values).subspan(it * s_axis.size(), s_axis.size()));
    }
    return grid;
}

double atm_bs_vol(const SurfaceParams& params, double T) {
    if (!(T > 0.0)) fail(ErrorCode::ZeroMaturity, "ATM volatility needs T > 0");
    return std::sqrt(total_variance_surface(0.0, T, params) / T);
}

}  // namespace fastval
