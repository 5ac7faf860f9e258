#include "fastval/varswap.hpp"

#include <cmath>
#include <string>

#include "fastval/analytics.hpp"
#include "fastval/errors.hpp"

namespace fastval {

namespace {

void validate(const VarSwapInputs& in) {
    in.slice.validate();
    if (!std::isfinite(in.rate)) fail(ErrorCode::InvalidParameter, "rate must be finite");
    if (!(in.maturity > 0.0) || !std::isfinite(in.maturity)) fail(ErrorCode::ZeroMaturity, "variance swap needs T > 0");
    if (!(in.spot > 0.0) || !std::isfinite(in.spot)) fail(ErrorCode::InvalidParameter, "spot must be > 0");
}

// Out-of-the-money option price over strike, as a function of x = log(K/S0):
// dK / K^2 = dx / K.
class Integrand {
public:
    Integrand(const VarSwapInputs& in, bool calls) : in_(in), calls_(calls) {}

    double operator()(double x) const {
        const double strike = in_.spot * std::exp(x);
        const double k = x - in_.rate * in_.maturity;
        const double w = slice_derivatives(k, in_.slice).w;
        const EuropeanQuote q{in_.spot, strike, in_.rate, std::sqrt(w / in_.maturity), in_.maturity};
        return (calls_ ? bs_call(q) : bs_put(q)) / strike;
    }

private:
    const VarSwapInputs& in_;
    bool calls_;
};

// Simpson sums on [lo, hi] that can be refined by interval doubling while
// reusing every previous function value.
class SimpsonRule {
public:
    SimpsonRule(const Integrand& f, double lo, double hi, long intervals)
        : f_(f), lo_(lo), hi_(hi), n_(intervals) {
        ends_ = f_(lo_) + f_(hi_);
        const double h = step();
        for (long i = 1; i < n_; ++i) {
            const double v = f_(lo_ + static_cast<double>(i) * h);
            (i % 2 ? odd_ : even_) += v;
        }
    }

    double value() const { return step() / 3.0 * (ends_ + 4.0 * odd_ + 2.0 * even_); }

    void refine() {
        even_ += odd_;
        odd_ = 0.0;
        n_ *= 2;
        const double h = step();
        for (long i = 1; i < n_; i += 2) odd_ += f_(lo_ + static_cast<double>(i) * h);
    }

private:
    double step() const { return (hi_ - lo_) / static_cast<double>(n_); }

    const Integrand& f_;
    double lo_;
    double hi_;
    long n_;
    double ends_ = 0.0;
    double odd_ = 0.0;
    double even_ = 0.0;
};

}  // namespace

double strike_vol(double strike, const SviSlice& slice, double rate, double maturity, double spot) {
    if (!(strike > 0.0)) fail(ErrorCode::InvalidParameter, "strike must be > 0");
    if (!(maturity > 0.0)) fail(ErrorCode::ZeroMaturity, "strike volatility needs T > 0");
    if (!(spot > 0.0)) fail(ErrorCode::InvalidParameter, "spot must be > 0");
    const double k = std::log(strike / (spot * std::exp(rate * maturity)));
    return std::sqrt(total_variance_slice(k, slice) / maturity);
}

FairStrikeResult fair_strike_detailed(const VarSwapInputs& in, const QuadratureSettings& q) {
    validate(in);
    if (!(q.x_min < 0.0 && q.x_max > 0.0) || q.initial_intervals < 2 || q.initial_intervals % 2 != 0 ||
        q.max_intervals < q.initial_intervals || !(q.tolerance > 0.0)) {
        fail(ErrorCode::InvalidParameter, "invalid quadrature settings");
    }

    const Integrand puts(in, false);
    const Integrand calls(in, true);
    long intervals = q.initial_intervals;
    SimpsonRule put_rule(puts, q.x_min, 0.0, intervals / 2);
    SimpsonRule call_rule(calls, 0.0, q.x_max, intervals / 2);

    const double rT = in.rate * in.maturity;
    const double growth = std::exp(rT);
    auto k_var = [&] {
        return 2.0 / in.maturity * (rT + 1.0 - growth + growth * (put_rule.value() + call_rule.value()));
    };

    double previous = k_var();
    while (intervals < q.max_intervals) {
        put_rule.refine();
        call_rule.refine();
        intervals *= 2;
        const double current = k_var();
        const double change = std::abs(current - previous);
        if (change < q.tolerance) return {current, intervals, change};
        previous = current;
    }
    fail(ErrorCode::NonConvergence,
         "fair-strike quadrature did not converge within " + std::to_string(q.max_intervals) + " intervals");
}

double fair_strike(const VarSwapInputs& in, const QuadratureSettings& q) {
    return fair_strike_detailed(in, q).k_var;
}

}  // namespace fastval
