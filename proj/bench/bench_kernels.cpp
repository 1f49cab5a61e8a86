// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lazyrec/kernels.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      lazyrec::kernels::gemm(false, false, 1, n, n, n, a.data(), 0, b.data(), 0, c.data(), 0, false);
    } else {
      lazyrec::kernels::reference::gemm(false, false, 1, n, n, n, a.data(), 0, b.data(), 0,
                                        c.data(), 0, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 1024;
  const auto x = random_vector(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      lazyrec::kernels::softmax_rows(x.data(), y.data(), rows, cols);
    } else {
      lazyrec::kernels::reference::softmax_rows(x.data(), y.data(), rows, cols);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_RmsNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 1024;
  const auto x = random_vector(rows * cols, 4);
  const std::vector<double> gain(cols, 1.0);
  std::vector<double> y(rows * cols), inv(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      lazyrec::kernels::rmsnorm_forward(x.data(), gain.data(), y.data(), inv.data(), rows, cols, 1e-6);
    } else {
      lazyrec::kernels::reference::rmsnorm_forward(x.data(), gain.data(), y.data(), inv.data(), rows,
                                                   cols, 1e-6);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Range(64, 4096);
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference")->Range(64, 4096);
BENCHMARK(BM_RmsNorm<true>)->Name("rmsnorm/parallel")->Range(64, 4096);
BENCHMARK(BM_RmsNorm<false>)->Name("rmsnorm/reference")->Range(64, 4096);

BENCHMARK_MAIN();
