// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels vs the im2col/OpenMP kernels on codec-sized layers.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "discover/kernels.hpp"

namespace {

using discover::kernels::ConvGeometry;

struct Buffers {
  std::vector<double> x, w, b, y;
  explicit Buffers(const ConvGeometry& g) : x(g.input_size()), w(g.weight_size()), b(g.out_channels), y(g.output_size()) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (auto* v : {&x, &w, &b})
      for (auto& e : *v) e = n(rng);
  }
};

ConvGeometry geometry(const benchmark::State& state) {
  ConvGeometry g;
  g.batch = 8;
  g.in_channels = g.out_channels = static_cast<int>(state.range(0));
  g.in_h = g.in_w = static_cast<int>(state.range(1));
  g.kernel = 3;
  g.stride = 1;
  g.pad = 1;
  return g;
}

template <auto Forward>
void conv_forward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  Buffers buf(g);
  for (auto _ : state) {
    Forward(g, buf.x.data(), buf.w.data(), buf.b.data(), buf.y.data());
    benchmark::DoNotOptimize(buf.y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(g.output_size() * g.in_channels * 9));
}

template <auto BackwardWeight>
void conv_backward_weight(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  Buffers buf(g);
  std::vector<double> dw(g.weight_size()), db(g.out_channels);
  for (auto _ : state) {
    BackwardWeight(g, buf.x.data(), buf.y.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <auto Gemm>
void gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> a(static_cast<std::size_t>(n) * n, 0.5), b(a.size(), 0.25), c(a.size());
  for (auto _ : state) {
    Gemm(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2L * n * n * n);
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 32})->Args({32, 16})->Args({48, 8})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(conv_forward<discover::kernels::reference::conv2d_forward>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(conv_forward<discover::kernels::parallel::conv2d_forward>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(conv_backward_weight<discover::kernels::reference::conv2d_backward_weight>)
    ->Name("conv_backward_weight/reference")
    ->Apply(conv_args);
BENCHMARK(conv_backward_weight<discover::kernels::parallel::conv2d_backward_weight>)
    ->Name("conv_backward_weight/parallel")
    ->Apply(conv_args);
BENCHMARK(gemm<discover::kernels::reference::gemm>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(gemm<discover::kernels::parallel::gemm>)->Name("gemm/parallel")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
