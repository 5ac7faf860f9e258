#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fastval {

/// Maturities are measured in units of the longest maturity on the surface.
inline constexpr double kMaxMaturity = 1.0;

/// Local variances handed to the PDE solver are clamped to this band.
inline constexpr double kLocalVarianceFloor = 1e-8;
inline constexpr double kLocalVarianceCap = 4.0;

/// Below this total variance the Dupire ratio is replaced by dw/dT.
inline constexpr double kDegenerateTotalVariance = 1e-10;

/**
 * One maturity slice of SVI total variance,
 *
 *   w(k) = a + b [ rho (k - m) + sqrt((k - m)^2 + sigma^2) ],
 *
 * stored with the shifted level a' = a + b sigma sqrt(1 - rho^2) so that the
 * positivity constraint on w reduces to a' >= 0. The minimum of w over k is
 * exactly a'.
 */
struct SviSlice {
    double a_prime = 0.0;  // vertical translation
    double b = 0.0;        // opening of the smile
    double rho = 0.0;      // rotation
    double m = 0.0;        // horizontal translation
    double sigma = 0.1;    // ATM curvature

    /// Raw SVI level a = a' - b sigma sqrt(1 - rho^2).
    double raw_a() const noexcept;

    static SviSlice from_raw(double a, double b, double rho, double m, double sigma);

    /// Throws ErrorCode::InvalidParameter unless a' >= 0, b >= 0, |rho| < 1,
    /// sigma > 0 and every field is finite.
    void validate() const;
};

/// SVI slice plus the one-factor term structure w(k, T) = w(k) f(T; lambda).
struct SurfaceParams {
    SviSlice slice;
    double lambda = 0.0;

    /// Slice admissibility plus 0 <= lambda <= 1 / kMaxMaturity.
    void validate() const;
};

struct SliceDerivatives {
    double w = 0.0;
    double dw_dk = 0.0;
    double d2w_dk2 = 0.0;
};

/// Total variance and the partial derivatives entering the Dupire formula.
struct SurfacePoint {
    double w = 0.0;
    double dw_dk = 0.0;
    double d2w_dk2 = 0.0;
    double dw_dT = 0.0;
};

double total_variance_slice(double k, const SviSlice& slice);

/// Closed-form w, dw/dk and d2w/dk2 of one slice. No validation.
SliceDerivatives slice_derivatives(double k, const SviSlice& slice) noexcept;

/// f(T; lambda) = T exp(lambda (1 - T)); requires T in [0, 1], lambda in [0, 1].
double term_factor(double T, double lambda);
double term_factor_derivative(double T, double lambda);

double total_variance_surface(double k, double T, const SurfaceParams& params);

/// Analytic w and its k- and T-derivatives at (k, T).
SurfacePoint surface_point(double k, double T, const SurfaceParams& params);

/// Denominator of the Dupire ratio in total-variance form:
///   1 - (k/w) w_k - 1/4 (1/4 + 1/w - k^2/w^2) w_k^2 + 1/2 w_kk.
double dupire_denominator(double k, const SurfacePoint& p) noexcept;

/// Dupire local variance from precomputed derivatives. Returns dw/dT when
/// w < kDegenerateTotalVariance and throws ErrorCode::ButterflyViolation when
/// the denominator is not positive. Not clamped.
double local_variance_from(double k, const SurfacePoint& p);

/// Local variance v_L(k, T) with analytic derivatives of the surface.
double local_variance(double k, double T, const SurfaceParams& params);

enum class DenominatorPolicy {
    Clamp,  // non-positive denominators map to kLocalVarianceCap
    Throw,  // non-positive denominators raise ErrorCode::ButterflyViolation
};

/// Local variance sampled on an (S, t) lattice, row-major in time:
/// values[it * s_values.size() + is].
struct LocalVarianceGrid {
    std::vector<double> s_values;
    std::vector<double> t_values;
    std::vector<double> values;

    double at(std::size_t it, std::size_t is) const { return values[it * s_values.size() + is]; }

    /// Bilinear interpolation, flat outside the axes.
    double interpolate(double s, double t) const;
};

/**
 * Evaluates sigma^2_loc(S_i, t) = v_L(log(S_i / (S0 e^{rt})), t) on a fixed set
 * of positive price nodes, one time level at a time. The result is clamped to
 * [kLocalVarianceFloor, kLocalVarianceCap].
 */
class LocalVarianceRow {
public:
    LocalVarianceRow(const SurfaceParams& params, double s0, double rate,
                     std::span<const double> s_nodes, DenominatorPolicy policy);

    void evaluate(double t, std::span<double> out) const;

    std::size_t size() const noexcept { return log_s_.size(); }

private:
    SurfaceParams params_;
    double log_s0_;
    double rate_;
    DenominatorPolicy policy_;
    std::vector<double> log_s_;
};

LocalVarianceGrid local_variance_grid(const SurfaceParams& params, double s0, double rate,
                                      std::span<const double> s_axis,
                                      std::span<const double> t_axis,
                                      DenominatorPolicy policy = DenominatorPolicy::Clamp);

/// sqrt(w(0, T) / T); throws ErrorCode::ZeroMaturity for T <= 0.
double atm_bs_vol(const SurfaceParams& params, double T);

}  // namespace fastval
