#pragma once

namespace fastval {

/// Inputs to the Black-Scholes closed forms (no dividends).
struct EuropeanQuote {
    double spot = 1.0;
    double strike = 1.0;
    double rate = 0.0;      // continuously compounded, per year
    double vol = 0.2;       // per sqrt(year)
    double maturity = 1.0;  // years
};

/// Standard normal CDF via erfc; N(+inf) = 1, N(-inf) = 0.
double norm_cdf(double x) noexcept;

/// Black-Scholes prices. Zero volatility or zero maturity give the discounted
/// intrinsic value. Throw ErrorCode::InvalidParameter on S0 <= 0, K <= 0,
/// negative vol or negative maturity.
double bs_call(const EuropeanQuote& q);
double bs_put(const EuropeanQuote& q);

}  // namespace fastval
