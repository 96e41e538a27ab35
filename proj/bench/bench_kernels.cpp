// Serial vs OpenMP timings for the hot kernels. Arg 0 = serial, 1 = parallel.

#include "uqkit/boosting.hpp"
#include "uqkit/forest.hpp"
#include "uqkit/gp_kernel.hpp"
#include "uqkit/random.hpp"

#include <benchmark/benchmark.h>

using namespace uqkit;

namespace {

Dataset synthetic(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data;
    data.features.resize(n, d);
    data.targets.resize(n);
    for (int j = 0; j < d; ++j) data.feature_names.push_back("x" + std::to_string(j));
    for (int i = 0; i < n; ++i) {
        data.ids.push_back(std::to_string(i));
        for (int j = 0; j < d; ++j) data.features(i, j) = rng.uniform(-3, 3);
        data.targets(i) = std::sin(data.features(i, 0)) + 0.5 * data.features(i, 1) + 0.3 * rng.normal();
    }
    return data;
}

Exec mode(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

void BM_GbdtFit(benchmark::State& state) {
    const auto data = synthetic(4000, 16, 1);
    GbdtConfig c;
    c.n_trees = 20;
    c.objective = Objective::quantile(0.84);
    for (auto _ : state) benchmark::DoNotOptimize(fit_gbdt(data, c, mode(state)));
}

void BM_GbdtPredict(benchmark::State& state) {
    const auto data = synthetic(20000, 16, 2);
    GbdtConfig c;
    c.n_trees = 100;
    const auto model = fit_gbdt(synthetic(2000, 16, 3), c);
    for (auto _ : state) benchmark::DoNotOptimize(predict_gbdt(model, data.features, std::nullopt, mode(state)));
}

void BM_ForestFit(benchmark::State& state) {
    const auto data = synthetic(2000, 8, 4);
    ForestConfig c;
    c.n_trees = 32;
    c.max_features = 0.5;
    for (auto _ : state) benchmark::DoNotOptimize(fit_forest(data, c, mode(state)));
}

void BM_GramMatrix(benchmark::State& state) {
    const auto data = synthetic(1500, 16, 5);
    KernelExpr k;
    k.with_rbf_ard(16, 1.0, 2.0).with_rq(0.5, 1.0, 1.0).with_white_noise(1e-2);
    for (auto _ : state) benchmark::DoNotOptimize(gram_matrix(k, data.features, mode(state)));
}

}  // namespace

BENCHMARK(BM_GbdtFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbdtPredict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GramMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
