#include "deepoformer/features.hpp"
#include "deepoformer/tensor.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace deepoformer;

namespace {

ad::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ad::Tensor t(rows, cols);
    for (double& v : t.data()) v = n(rng);
    return t;
}

void BM_Gemm(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto n = static_cast<std::size_t>(state.range(2));
    const ad::Tensor a = random_tensor(m, k, 1), b = random_tensor(k, n, 2);
    ad::Tensor out(m, n);
    for (auto _ : state) {
        out.fill(0.0);
        ad::kernels::gemm_acc(a, b, out);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * k * n));
}
// Shapes met in training: token projections, FFN and the concat projection.
BENCHMARK(BM_Gemm)->Args({320, 48, 48})->Args({320, 48, 192})->Args({320, 192, 48})->Args({320, 144, 48});

void BM_GemmTransposed(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const ad::Tensor a = random_tensor(m, 48, 3), g = random_tensor(m, 192, 4);
    ad::Tensor out(48, 192);
    for (auto _ : state) {
        out.fill(0.0);
        ad::kernels::gemm_tn_acc(a, g, out);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_GemmTransposed)->Arg(64)->Arg(320);

void BM_TrunkFeatures(benchmark::State& state) {
    double s = 120.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(make_trunk_features(480.0, s, 150.0));
        s = s < 400.0 ? s + 0.5 : 120.0;
    }
}
BENCHMARK(BM_TrunkFeatures);

}  // namespace
