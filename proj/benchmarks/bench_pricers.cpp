#include <benchmark/benchmark.h>

#include <vector>

#include "fastval/dataset.hpp"
#include "fastval/fdsolver.hpp"
#include "fastval/gpr.hpp"
#include "fastval/varswap.hpp"

namespace {

using namespace fastval;

void BM_AmericanPutSurface(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto x = sample(Mode::AmPut, Split::Test, 1, 11).front();
    const PdeProblem problem = amput_problem(x, DenominatorPolicy::Clamp);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve(problem, GridSpec{n, n}).spot_greeks.value);
    }
}
BENCHMARK(BM_AmericanPutSurface)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_FairStrike(benchmark::State& state) {
    const VarSwapInputs in{{0.01, 0.15, -0.1, 0.2, 0.2}, 0.03};
    for (auto _ : state) benchmark::DoNotOptimize(fair_strike(in));
}
BENCHMARK(BM_FairStrike)->Unit(benchmark::kMillisecond);

// Batch mean prediction of m queries against n training rows, 4 targets.
void BM_GprPredictMeans(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto m = static_cast<std::size_t>(state.range(1));
    const auto rows = sample(Mode::AmPut, Split::Train, n, 5);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 8);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 8; ++k) x(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
    }
    auto inputs = std::make_shared<TrainingInputs>();
    inputs->scaler = Standardizer::fit(x);
    inputs->x = inputs->scaler.apply(x);
    std::vector<TrainedGpr> models;
    for (int t = 0; t < 4; ++t) {
        const Eigen::VectorXd y = inputs->x.col(t).array().sin();
        models.emplace_back(inputs, y, 0.0, 1.0, Hyperparams{3.0, 1e-3});
    }
    std::vector<const TrainedGpr*> ptrs;
    for (const auto& mdl : models) ptrs.push_back(&mdl);
    const auto q_rows = sample(Mode::AmPut, Split::Test, m, 6);
    Eigen::MatrixXd q(static_cast<Eigen::Index>(m), 8);
    for (std::size_t i = 0; i < m; ++i) {
        for (int k = 0; k < 8; ++k) q(static_cast<Eigen::Index>(i), k) = q_rows[i][static_cast<std::size_t>(k)];
    }
    for (auto _ : state) benchmark::DoNotOptimize(predict_means(ptrs, q)(0, 0));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m));
}
BENCHMARK(BM_GprPredictMeans)->Args({1000, 500})->Args({1000, 2000})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
