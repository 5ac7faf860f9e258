#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fastval/errors.hpp"
#include "fastval/volsurface.hpp"
#include "oracles.hpp"

using namespace fastval;

namespace {

const SviSlice kVarSwapBaseline{0.01, 0.15, -0.1, 0.2, 0.2};
const SurfaceParams kFig2Baseline{{0.01, 0.15, 0.2, 0.2, 0.5}, 0.5};

SurfaceParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SurfaceParams p;
    p.slice.a_prime = 0.02 * u(rng);
    p.slice.b = 0.3 * u(rng);
    p.slice.rho = -0.4 + 1.2 * u(rng);
    p.slice.m = -0.2 + 0.8 * u(rng);
    p.slice.sigma = 1e-3 + (1.0 - 1e-3) * u(rng);
    p.lambda = u(rng);
    return p;
}

oracle::Svi to_oracle(const SurfaceParams& p) {
    return {p.slice.a_prime, p.slice.b, p.slice.rho, p.slice.m, p.slice.sigma, p.lambda};
}

}  // namespace

TEST(TotalVarianceSlice, BaselineAtmVolIsSixteenPercent) {
    const double w = total_variance_slice(0.0, kVarSwapBaseline);
    EXPECT_NEAR(std::sqrt(w), 0.16, 0.005);
}

TEST(TotalVarianceSlice, ZeroSlopeGivesLevel) {
    const SviSlice s{0.013, 0.0, 0.3, 0.1, 0.4};
    for (double k : {-1.0, -0.2, 0.0, 0.7, 3.0}) EXPECT_EQ(total_variance_slice(k, s), 0.013);
}

TEST(TotalVarianceSlice, ZeroRotationAtMinimumGivesLevel) {
    const SviSlice s{0.011, 0.2, 0.0, 0.25, 0.3};
    EXPECT_NEAR(total_variance_slice(0.25, s), 0.011, 1e-17);
}

TEST(TotalVarianceSlice, RejectsInadmissibleSlices) {
    EXPECT_THROW(total_variance_slice(0.0, {-0.01, 0.1, 0.0, 0.0, 0.1}), Error);
    EXPECT_THROW(total_variance_slice(0.0, {0.01, -0.1, 0.0, 0.0, 0.1}), Error);
    EXPECT_THROW(total_variance_slice(0.0, {0.01, 0.1, 1.0, 0.0, 0.1}), Error);
    EXPECT_THROW(total_variance_slice(0.0, {0.01, 0.1, 0.0, 0.0, 0.0}), Error);
    EXPECT_THROW(total_variance_slice(0.0, {0.01, 0.1, 0.0, std::nan(""), 0.1}), Error);
    try {
        total_variance_slice(0.0, {0.01, 0.1, -1.0, 0.0, 0.1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidParameter);
    }
}

TEST(TotalVarianceSlice, NonNegativeOverTrainingRanges) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> k(-5.0, 5.0);
    for (int i = 0; i < 2000; ++i) {
        const auto p = random_params(rng);
        EXPECT_GE(total_variance_slice(k(rng), p.slice), 0.0);
    }
}

TEST(TotalVarianceSlice, ParameterRoles) {
    const SviSlice base{0.01, 0.15, 0.2, 0.2, 0.5};
    SviSlice up = base;
    up.a_prime = 0.015;
    for (double k = -1.0; k <= 1.0; k += 0.05) {
        EXPECT_GT(total_variance_slice(k, up), total_variance_slice(k, base));
    }
    auto argmin = [](const SviSlice& s) {
        double best_k = -3.0, best = 1e9;
        for (double k = -3.0; k <= 3.0; k += 1e-3) {
            const double w = total_variance_slice(k, s);
            if (w < best) best = w, best_k = k;
        }
        return best_k;
    };
    SviSlice right = base;
    right.m = 0.4;
    EXPECT_GT(argmin(right), argmin(base));
}

TEST(SviSlice, ReparameterisationRoundTrips) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 1000; ++i) {
        const SviSlice s = random_params(rng).slice;
        const SviSlice back = SviSlice::from_raw(s.raw_a(), s.b, s.rho, s.m, s.sigma);
        // a' - c + c can differ from a' by one rounding of the larger term.
        const double c = s.b * s.sigma * std::sqrt(1.0 - s.rho * s.rho);
        EXPECT_LE(std::abs(back.a_prime - s.a_prime), std::numeric_limits<double>::epsilon() * std::max(c, s.a_prime));
    }
}

TEST(TermFactor, EndpointsAndFlatCase) {
    for (double lam : {0.0, 0.3, 1.0}) {
        EXPECT_EQ(term_factor(1.0, lam), 1.0);
        EXPECT_EQ(term_factor(0.0, lam), 0.0);
    }
    EXPECT_EQ(term_factor(0.5, 0.0), 0.5);
}

TEST(TermFactor, StrictlyIncreasing) {
    for (double lam : {0.0, 0.5, 1.0}) {
        double prev = -1.0;
        for (int i = 0; i <= 100; ++i) {
            const double f = term_factor(i / 100.0, lam);
            EXPECT_GT(f, prev);
            prev = f;
        }
    }
}

TEST(TermFactor, RejectsOutOfRange) {
    EXPECT_THROW(term_factor(1.5, 0.2), Error);
    EXPECT_THROW(term_factor(-0.1, 0.2), Error);
    EXPECT_THROW(term_factor(0.5, 1.2), Error);
    EXPECT_THROW(term_factor(0.5, -0.1), Error);
}

TEST(TotalVarianceSurface, Values) {
    const SurfaceParams p{kVarSwapBaseline, 0.4};
    EXPECT_EQ(total_variance_surface(0.0, 1.0, p), total_variance_slice(0.0, kVarSwapBaseline));
    EXPECT_EQ(total_variance_surface(0.3, 0.0, p), 0.0);
    // 0.02 * 0.5 * exp(0.25), evaluated independently.
    const SurfaceParams flat{{0.02, 0.0, 0.0, 0.0, 0.1}, 0.5};
    EXPECT_NEAR(total_variance_surface(0.0, 0.5, flat), 0.012840254166877414, 1e-17);
}

TEST(TotalVarianceSurface, CalendarMonotone) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const auto p = random_params(rng);
        const double k = -1.0 + 2.0 * u(rng);
        double t1 = u(rng), t2 = u(rng);
        if (t1 > t2) std::swap(t1, t2);
        EXPECT_LE(total_variance_surface(k, t1, p), total_variance_surface(k, t2, p));
    }
}

TEST(SurfacePoint, AnalyticDerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const auto p = random_params(rng);
        const auto o = to_oracle(p);
        const double k = -1.0 + 2.0 * u(rng);
        const double t = 0.05 + 0.95 * u(rng);
        const SurfacePoint sp = surface_point(k, t, p);
        // Step scaled to the distance from the smile's vertex, where w bends.
        const long double h = 5e-3L * std::hypot(k - p.slice.m, p.slice.sigma);
        const long double wk = oracle::d1([&](long double x) { return o.w(x, t); }, k, h);
        const long double wkk = oracle::d2([&](long double x) { return o.w(x, t); }, k, h);
        const long double wt = oracle::d1([&](long double x) { return o.w(k, x); }, t, 1e-4L);
        EXPECT_NEAR(sp.w, static_cast<double>(o.w(k, t)), 1e-15);
        EXPECT_NEAR(sp.dw_dk, static_cast<double>(wk), 1e-6 * std::abs(sp.dw_dk) + 1e-13);
        EXPECT_NEAR(sp.d2w_dk2, static_cast<double>(wkk), 1e-6 * std::abs(sp.d2w_dk2) + 1e-13);
        EXPECT_NEAR(sp.dw_dT, static_cast<double>(wt), 1e-6 * std::abs(sp.dw_dT) + 1e-13);
    }
}

TEST(LocalVariance, FlatSliceGivesLevel) {
    const SurfaceParams p{{0.04, 0.0, 0.0, 0.0, 0.1}, 0.0};
    for (double k : {-0.8, 0.0, 0.5}) {
        for (double t : {0.1, 0.5, 1.0}) EXPECT_NEAR(local_variance(k, t, p), 0.04, 1e-16);
    }
}

TEST(LocalVariance, MatchesFiniteDifferenceRoute) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    for (int i = 0; i < 2000 && checked < 500; ++i) {
        const auto p = random_params(rng);
        const double k = -1.0 + 2.0 * u(rng);
        const double t = 0.05 + 0.95 * u(rng);
        double analytic = 0.0;
        try {
            analytic = local_variance(k, t, p);
        } catch (const Error& e) {
            ASSERT_EQ(e.code(), ErrorCode::ButterflyViolation);
            continue;
        }
        const auto fd = static_cast<double>(oracle::fd_local_variance(to_oracle(p), k, t));
        EXPECT_NEAR(analytic, fd, 1e-5 * std::abs(analytic));
        ++checked;
    }
    EXPECT_GE(checked, 500);
}

TEST(LocalVariance, DegenerateVarianceFallsBackToTimeDerivative) {
    const SurfaceParams p{{0.0, 0.0, 0.0, 0.0, 0.1}, 0.3};
    EXPECT_EQ(local_variance(0.2, 0.5, p), 0.0);
    const SurfaceParams tiny{{1e-12, 0.0, 0.0, 0.0, 0.1}, 0.0};
    EXPECT_NEAR(local_variance(0.1, 0.5, tiny), 1e-12, 1e-24);
}

TEST(LocalVariance, NonPositiveDenominatorThrows) {
    // A steep, sharp smile violates the butterfly condition in the wings.
    const SurfaceParams p{{0.0, 0.3, 0.8, 0.0, 0.01}, 0.0};
    bool thrown = false;
    for (double k = -1.0; k <= 1.0 && !thrown; k += 0.01) {
        try {
            local_variance(k, 1.0, p);
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::ButterflyViolation);
            thrown = true;
        }
    }
    EXPECT_TRUE(thrown);
}

TEST(LocalVarianceGrid, FlatSurfaceZeroRate) {
    const SurfaceParams p{{0.03, 0.0, 0.0, 0.0, 0.1}, 0.0};
    const std::vector<double> s = {0.5, 1.0, 1.5};
    const std::vector<double> t = {0.25, 0.5, 1.0};
    const auto g = local_variance_grid(p, 1.0, 0.0, s, t);
    for (double v : g.values) EXPECT_NEAR(v, 0.03, 1e-16);
}

TEST(LocalVarianceGrid, ForwardNodeMapsToZeroLogMoneyness) {
    const double r = 0.04, t = 0.5;
    const std::vector<double> s = {std::exp(r * t)};
    const std::vector<double> ts = {t};
    const auto g = local_variance_grid(kFig2Baseline, 1.0, r, s, ts);
    EXPECT_NEAR(g.values[0], local_variance(0.0, t, kFig2Baseline), 1e-14);
}

TEST(LocalVarianceGrid, MatchesPointwiseCalls) {
    std::vector<double> s, t;
    for (int i = 1; i <= 30; ++i) s.push_back(0.1 * i);
    for (int i = 1; i <= 20; ++i) t.push_back(0.05 * i);
    const double r = 0.03;
    const auto g = local_variance_grid(kFig2Baseline, 1.0, r, s, t);
    ASSERT_EQ(g.values.size(), s.size() * t.size());
    for (std::size_t it = 0; it < t.size(); ++it) {
        for (std::size_t is = 0; is < s.size(); ++is) {
            const double k = std::log(s[is] / std::exp(r * t[it]));
            double expected = kLocalVarianceCap;  // clamp policy for a non-positive denominator
            try {
                expected = std::clamp(local_variance(k, t[it], kFig2Baseline), kLocalVarianceFloor, kLocalVarianceCap);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::ButterflyViolation);
            }
            EXPECT_NEAR(g.at(it, is), expected, 1e-13 * expected);
            EXPECT_GE(g.at(it, is), 0.0);
        }
    }
}

TEST(LocalVarianceGrid, RejectsUnsortedAxes) {
    const std::vector<double> s = {1.0, 0.5};
    const std::vector<double> t = {0.5};
    EXPECT_THROW(local_variance_grid(kFig2Baseline, 1.0, 0.0, s, t), Error);
}

TEST(LocalVarianceGrid, BilinearInterpolation) {
    LocalVarianceGrid g;
    g.s_values = {1.0, 2.0};
    g.t_values = {0.0, 1.0};
    g.values = {1.0, 2.0, 3.0, 4.0};
    EXPECT_DOUBLE_EQ(g.interpolate(1.5, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(g.interpolate(0.0, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(g.interpolate(5.0, 2.0), 4.0);
}

TEST(AtmBsVol, Values) {
    EXPECT_NEAR(atm_bs_vol({kVarSwapBaseline, 0.0}, 1.0), 0.16, 0.005);
    const SurfaceParams flat{{0.04, 0.0, 0.0, 0.0, 0.1}, 0.0};
    EXPECT_NEAR(atm_bs_vol(flat, 1.0), 0.2, 1e-15);
    EXPECT_NEAR(atm_bs_vol(flat, 0.25), 0.2, 1e-15);
    try {
        atm_bs_vol(flat, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroMaturity);
    }
}
