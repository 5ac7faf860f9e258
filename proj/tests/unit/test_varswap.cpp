#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fastval/errors.hpp"
#include "fastval/varswap.hpp"
#include "oracles.hpp"

using namespace fastval;

namespace {

const SviSlice kBaseline{0.01, 0.15, -0.1, 0.2, 0.2};

long double oracle_fair_strike(const SviSlice& s, double r, double t) {
    const oracle::Svi svi{s.a_prime, s.b, s.rho, s.m, s.sigma, 0.0L};
    const long double fwd = std::exp(static_cast<long double>(r) * t);
    auto vol = [&](long double k) { return std::sqrt(svi.w(std::log(k / fwd), 1.0L) / t); };
    return oracle::replicated_fair_strike(vol, 1.0L, r, t);
}

}  // namespace

TEST(FairStrike, FlatSliceZeroRate) {
    const VarSwapInputs in{{0.04, 0.0, 0.0, 0.0, 0.1}, 0.0};
    EXPECT_NEAR(fair_strike(in), 0.04, 1e-6);
}

TEST(FairStrike, FlatSlicePositiveRate) {
    const VarSwapInputs in{{0.04, 0.0, 0.0, 0.0, 0.1}, 0.05};
    EXPECT_NEAR(fair_strike(in), 0.04, 1e-6);
    EXPECT_NEAR(static_cast<double>(oracle_fair_strike(in.slice, 0.05, 1.0)), 0.04, 1e-9);
}

TEST(FairStrike, FlatSkewIdentityOnRandomDraws) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> a(0.001, 0.02), r(0.0, 0.06), other(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const SviSlice s{a(rng), 0.0, -0.4 + 1.2 * other(rng), -0.2 + 0.8 * other(rng), 0.01 + other(rng)};
        EXPECT_NEAR(fair_strike({s, r(rng)}), s.a_prime, 1e-6);
    }
}

TEST(FairStrike, BaselineMatchesIndependentReplication) {
    const double k_var = fair_strike({kBaseline, 0.03});
    EXPECT_NEAR(k_var, static_cast<double>(oracle_fair_strike(kBaseline, 0.03, 1.0)), 1e-8);
    // The skewed smile makes the fair strike exceed the ATM variance.
    EXPECT_GT(k_var, 0.0256 * 0.9);
}

TEST(FairStrike, RandomSkewsMatchIndependentReplication) {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
        const SviSlice s{0.001 + 0.019 * u(rng), 0.3 * u(rng), -0.4 + 1.2 * u(rng), -0.2 + 0.8 * u(rng),
                         0.05 + 0.95 * u(rng)};
        const double r = 0.06 * u(rng);
        EXPECT_NEAR(fair_strike({s, r}), static_cast<double>(oracle_fair_strike(s, r, 1.0)), 1e-7);
    }
}

TEST(FairStrike, ConvergesAndIsStableUnderRefinement) {
    const auto coarse = fair_strike_detailed({kBaseline, 0.03});
    EXPECT_LT(coarse.last_change, 1e-8);
    QuadratureSettings fine;
    fine.initial_intervals = 1L << 16;
    fine.max_intervals = 1L << 20;
    fine.tolerance = 1e-11;
    EXPECT_NEAR(coarse.k_var, fair_strike({kBaseline, 0.03}, fine), 2e-8);
}

TEST(FairStrike, MonotoneAndSmoothInLevel) {
    std::vector<double> values;
    for (int i = 0; i < 50; ++i) {
        SviSlice s = kBaseline;
        s.a_prime = 0.02 * i / 49.0;
        values.push_back(fair_strike({s, 0.03}));
    }
    for (std::size_t i = 1; i < values.size(); ++i) {
        EXPECT_GT(values[i], values[i - 1]);
        if (i + 1 < values.size()) {
            // Second differences stay small relative to first differences.
            EXPECT_LT(std::abs(values[i + 1] - 2 * values[i] + values[i - 1]), 0.1 * (values[i] - values[i - 1]));
        }
    }
}

TEST(FairStrike, RejectsInvalidInputs) {
    EXPECT_THROW(fair_strike({{-0.01, 0.1, 0.0, 0.0, 0.1}, 0.0}), Error);
    VarSwapInputs zero_t{kBaseline, 0.0, 0.0};
    try {
        fair_strike(zero_t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroMaturity);
    }
    QuadratureSettings bad;
    bad.initial_intervals = 3;
    EXPECT_THROW(fair_strike({kBaseline, 0.0}, bad), Error);
    QuadratureSettings tight;
    tight.tolerance = 1e-30;
    tight.max_intervals = 1L << 13;
    try {
        fair_strike({kBaseline, 0.0}, tight);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonConvergence);
    }
}

TEST(StrikeVol, Values) {
    const double r = 0.03;
    EXPECT_NEAR(strike_vol(std::exp(r), kBaseline, r, 1.0), 0.16, 0.005);
    EXPECT_EQ(strike_vol(std::exp(r), kBaseline, r, 1.0), std::sqrt(total_variance_slice(0.0, kBaseline)));
    const SviSlice flat{0.04, 0.0, 0.0, 0.0, 0.1};
    for (double k : {0.5, 1.0, 2.0}) EXPECT_NEAR(strike_vol(k, flat, r, 1.0), 0.2, 1e-15);
}
