/*
 * SPDX-License-Identifier: Apache-2.0
 */
// Parallel kernels against the serial reference on detector/U-net shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "insloc/kernels.hpp"

namespace k = insloc::kernels;

namespace {

std::vector<double> random_vec(std::size_t n) {
  std::mt19937_64 rng(n);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

k::ConvGeometry conv_shape(std::size_t ci, std::size_t hw, std::size_t co) {
  k::ConvGeometry g;
  g.batch = 2;
  g.in_channels = ci;
  g.in_h = g.in_w = hw;
  g.out_channels = co;
  g.kernel = 3;
  g.pad_top = g.pad_left = 1;
  g.out_h = g.out_w = hw;
  return g;
}

template <bool kReference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (kReference) {
      k::reference::gemm(k::Trans::kNo, k::Trans::kNo, n, n, n, 1.0, a.data(), n, b.data(), n,
                         0.0, c.data(), n);
    } else {
      k::gemm(k::Trans::kNo, k::Trans::kNo, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0,
              c.data(), n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPs"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <bool kReference>
void BM_Conv(benchmark::State& state) {
  const auto g = conv_shape(state.range(0), state.range(1), state.range(2));
  auto in = random_vec(g.batch * g.in_channels * g.in_h * g.in_w);
  auto w = random_vec(g.out_channels * g.in_channels * 9);
  std::vector<double> out(g.batch * g.out_channels * g.out_h * g.out_w);
  std::vector<double> gin(in.size()), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (kReference) {
      k::reference::conv2d_forward(g, in.data(), w.data(), nullptr, out.data());
      k::reference::conv2d_backward(g, in.data(), w.data(), out.data(), gin.data(), gw.data(),
                                    gb.data());
    } else {
      k::conv2d_forward(g, in.data(), w.data(), nullptr, out.data());
      k::conv2d_backward(g, in.data(), w.data(), out.data(), gin.data(), gw.data(), gb.data());
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool kReference>
void BM_TConv(benchmark::State& state) {
  const std::size_t ci = state.range(0), hw = state.range(1), co = ci / 2;
  auto in = random_vec(2 * ci * hw * hw);
  auto w = random_vec(ci * co * 4);
  std::vector<double> out(2 * co * 4 * hw * hw);
  for (auto _ : state) {
    if constexpr (kReference) {
      k::reference::tconv2x2_forward(2, ci, hw, hw, co, in.data(), w.data(), nullptr, out.data());
    } else {
      k::tconv2x2_forward(2, ci, hw, hw, co, in.data(), w.data(), nullptr, out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool kReference>
void BM_MaxPool(benchmark::State& state) {
  const std::size_t planes = state.range(0), hw = state.range(1);
  auto in = random_vec(planes * hw * hw);
  std::vector<double> out(in.size() / 4);
  std::vector<std::size_t> arg(out.size());
  for (auto _ : state) {
    if constexpr (kReference) {
      k::reference::maxpool2x2_forward(planes, hw, hw, in.data(), out.data(), arg.data());
    } else {
      k::maxpool2x2_forward(planes, hw, hw, in.data(), out.data(), arg.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv<true>)->Name("conv3x3_fwd_bwd/reference")->Args({16, 64, 32})->Args({64, 16, 128});
BENCHMARK(BM_Conv<false>)->Name("conv3x3_fwd_bwd/parallel")->Args({16, 64, 32})->Args({64, 16, 128});
BENCHMARK(BM_TConv<true>)->Name("tconv2x2/reference")->Args({64, 16});
BENCHMARK(BM_TConv<false>)->Name("tconv2x2/parallel")->Args({64, 16});
BENCHMARK(BM_MaxPool<true>)->Name("maxpool2x2/reference")->Args({64, 64});
BENCHMARK(BM_MaxPool<false>)->Name("maxpool2x2/parallel")->Args({64, 64});

BENCHMARK_MAIN();
