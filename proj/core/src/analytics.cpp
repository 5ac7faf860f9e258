#include "fastval/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fastval/errors.hpp"

namespace fastval {

namespace {

void validate(const EuropeanQuote& q) {
    if (!(q.spot > 0.0) || !std::isfinite(q.spot)) fail(ErrorCode::InvalidParameter, "spot must be > 0");
    if (!(q.strike > 0.0) || !std::isfinite(q.strike)) fail(ErrorCode::InvalidParameter, "strike must be > 0");
    if (!(q.vol >= 0.0) || !std::isfinite(q.vol)) fail(ErrorCode::InvalidParameter, "volatility must be >= 0");
    if (!(q.maturity >= 0.0) || !std::isfinite(q.maturity)) fail(ErrorCode::InvalidParameter, "maturity must be >= 0");
    if (!std::isfinite(q.rate)) fail(ErrorCode::InvalidParameter, "rate must be finite");
}

struct D12 {
    double d1;
    double d2;
};

D12 d_terms(const EuropeanQuote& q) {
    const double sd = q.vol * std::sqrt(q.maturity);
    const double d1 = (std::log(q.spot / q.strike) + (q.rate + 0.5 * q.vol * q.vol) * q.maturity) / sd;
    return {d1, d1 - sd};
}

bool degenerate(const EuropeanQuote& q) { return q.vol == 0.0 || q.maturity == 0.0; }

}  // namespace

double norm_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double bs_call(const EuropeanQuote& q) {
    validate(q);
    const double df = std::exp(-q.rate * q.maturity);
    if (degenerate(q)) return std::max(q.spot - q.strike * df, 0.0);
    const auto [d1, d2] = d_terms(q);
    return std::max(q.spot * norm_cdf(d1) - q.strike * df * norm_cdf(d2), 0.0);
}

double bs_put(const EuropeanQuote& q) {
    validate(q);
    const double df = std::exp(-q.rate * q.maturity);
    if (degenerate(q)) return std::max(q.strike * df - q.spot, 0.0);
    const auto [d1, d2] = d_terms(q);
    return std::max(q.strike * df * norm_cdf(-d2) - q.spot * norm_cdf(-d1), 0.0);
}

}  // namespace fastval
