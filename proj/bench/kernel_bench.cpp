// Serial reference vs OpenMP kernels on model-sized shapes.
// Thread count for the parallel variants comes from FCTL_THREADS (default 1).
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fctl/kernels.hpp"
#include "fctl/parallel.hpp"

using namespace fctl;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0F, 1.0F);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Encoder layers at patch 64: (in, out, side).
kernels::ConvGeometry conv_shape(const benchmark::State& state) {
  kernels::ConvGeometry g;
  g.in_channels = state.range(0);
  g.out_channels = state.range(1);
  g.height = g.width = state.range(2);
  g.kernel_h = g.kernel_w = 3;
  g.pad = 1;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_shape(state);
  const auto x = random_vec(static_cast<std::size_t>(g.in_channels * g.height * g.width), 1);
  const auto w = random_vec(static_cast<std::size_t>(g.out_channels * g.patch_size()), 2);
  const auto b = random_vec(static_cast<std::size_t>(g.out_channels), 3);
  std::vector<float> y(static_cast<std::size_t>(g.out_channels * g.out_height() * g.out_width()));
  for (auto _ : state) {
    if constexpr (Parallel) kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    else kernels::serial::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["threads"] = Parallel ? num_threads() : 1;
  state.SetItemsProcessed(state.iterations() * 2 * g.out_channels * g.patch_size() * g.out_height() * g.out_width());
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = conv_shape(state);
  const auto xn = static_cast<std::size_t>(g.in_channels * g.height * g.width);
  const auto wn = static_cast<std::size_t>(g.out_channels * g.patch_size());
  const auto yn = static_cast<std::size_t>(g.out_channels * g.out_height() * g.out_width());
  const auto x = random_vec(xn, 1), w = random_vec(wn, 2), dy = random_vec(yn, 4);
  std::vector<float> dx(xn), dw(wn), db(static_cast<std::size_t>(g.out_channels));
  for (auto _ : state) {
    if constexpr (Parallel) kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    else kernels::serial::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dx.data());
  }
  state.counters["threads"] = Parallel ? num_threads() : 1;
}

// The lcc products at feature size 16: [256,c] x [c,256] and [256,256] x [256,c].
template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const Index m = state.range(0), k = state.range(1), p = state.range(2);
  const auto a = random_vec(static_cast<std::size_t>(m * k), 5), b = random_vec(static_cast<std::size_t>(k * p), 6);
  std::vector<float> c(static_cast<std::size_t>(m * p));
  for (auto _ : state) {
    if constexpr (Parallel) kernels::gemm(m, k, p, a.data(), b.data(), c.data());
    else kernels::serial::gemm(m, k, p, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["threads"] = Parallel ? num_threads() : 1;
  state.SetItemsProcessed(state.iterations() * 2 * m * k * p);
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({3, 16, 64})->Args({16, 32, 32})->Args({32, 32, 16})->Args({64, 32, 16});
}

void gemm_args(benchmark::internal::Benchmark* b) { b->Args({256, 32, 256})->Args({256, 256, 32}); }

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Apply(conv_args);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->Apply(conv_args);
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Apply(gemm_args);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Apply(gemm_args);

int main(int argc, char** argv) {
  configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
