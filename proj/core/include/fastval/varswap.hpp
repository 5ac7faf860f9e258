#pragma once

#include "fastval/volsurface.hpp"

namespace fastval {

struct VarSwapInputs {
    SviSlice slice;
    double rate = 0.0;
    double maturity = 1.0;
    double spot = 1.0;
};

/// Composite Simpson in x = log(K/S0). Puts are integrated over [x_min, 0],
/// calls over [0, x_max]; the interval count covers the whole range and is
/// doubled until successive fair strikes agree to `tolerance`.
struct QuadratureSettings {
    double x_min = -10.0;
    double x_max = 10.0;
    long initial_intervals = 1L << 12;
    long max_intervals = 1L << 18;
    double tolerance = 1e-8;
};

struct FairStrikeResult {
    double k_var = 0.0;
    long intervals = 0;
    double last_change = 0.0;
};

/// Black-Scholes volatility of strike K read off the SVI slice at forward
/// log-moneyness log(K / (S0 e^{rT})): sqrt(w / T).
double strike_vol(double strike, const SviSlice& slice, double rate, double maturity,
                  double spot = 1.0);

/// Variance-swap fair strike by log-contract replication with out-of-the-money
/// options split at S0. Throws ErrorCode::NonConvergence if the tolerance is
/// not met by max_intervals.
FairStrikeResult fair_strike_detailed(const VarSwapInputs& in, const QuadratureSettings& q = {});

double fair_strike(const VarSwapInputs& in, const QuadratureSettings& q = {});

}  // namespace fastval
