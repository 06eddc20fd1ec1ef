// Parallel kernels against the serial reference.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "simmp/kernels.hpp"

namespace k = simmp::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::gemm(a, b, c, n, n, n, false);
    else k::reference::gemm(a, b, c, n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n * n, 3);
  std::vector<double> y(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::softmax_rows(x, y, n, n);
    else k::reference::softmax_rows(x, y, n, n);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const k::ConvGeometry g{s, s, 16, 3, 3, 32, 1, 1};
  const auto x = random_vec(s * s * 16, 4), w = random_vec(9 * 16 * 32, 5);
  std::vector<double> out(g.out_height() * g.out_width() * 32);
  for (auto _ : state) {
    if constexpr (Parallel) k::conv2d(x, w, out, g);
    else k::reference::conv2d(x, w, out, g);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_Softmax<true>)->Arg(256)->Arg(1024);
BENCHMARK(BM_Softmax<false>)->Arg(256)->Arg(1024);
BENCHMARK(BM_Conv<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_Conv<false>)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
