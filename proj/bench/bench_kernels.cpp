// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "uma/kernels.hpp"

namespace k = uma::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Toy backbone second layer: 18x18x16 input, 32 filters of 3x3.
k::ConvGeometry conv_geometry(std::size_t side) { return {side, side, 16, 3, 32, 1}; }

template <auto Fn>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
  const auto in = random_values(g.height * g.width * g.in_channels, 1);
  const auto w = random_values(g.kernel * g.kernel * g.in_channels * g.out_channels, 2);
  const auto b = random_values(g.out_channels, 3);
  std::vector<double> out(g.out_height() * g.out_width() * g.out_channels);
  for (auto _ : state) {
    Fn(g, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_ConvBackwardKernel(benchmark::State& state) {
  const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
  const auto in = random_values(g.height * g.width * g.in_channels, 1);
  const auto go = random_values(g.out_height() * g.out_width() * g.out_channels, 2);
  std::vector<double> gw(g.kernel * g.kernel * g.in_channels * g.out_channels);
  for (auto _ : state) {
    Fn(g, in, go, gw);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <auto Fn>
void BM_MaxPool(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const k::PoolGeometry g{side, side, 32, 2, 2};
  const auto in = random_values(side * side * 32, 4);
  std::vector<double> out(g.out_height() * g.out_width() * 32);
  std::vector<std::size_t> arg(out.size());
  for (auto _ : state) {
    Fn(g, in, out, arg);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<k::reference::conv2d_forward>)->Name("conv_forward/reference")->Arg(18)->Arg(36);
BENCHMARK(BM_ConvForward<k::parallel::conv2d_forward>)->Name("conv_forward/parallel")->Arg(18)->Arg(36);
BENCHMARK(BM_ConvBackwardKernel<k::reference::conv2d_backward_kernel>)
    ->Name("conv_backward_kernel/reference")
    ->Arg(18)
    ->Arg(36);
BENCHMARK(BM_ConvBackwardKernel<k::parallel::conv2d_backward_kernel>)
    ->Name("conv_backward_kernel/parallel")
    ->Arg(18)
    ->Arg(36);
BENCHMARK(BM_MaxPool<k::reference::max_pool_forward>)->Name("max_pool/reference")->Arg(36)->Arg(72);
BENCHMARK(BM_MaxPool<k::parallel::max_pool_forward>)->Name("max_pool/parallel")->Arg(36)->Arg(72);

BENCHMARK_MAIN();
