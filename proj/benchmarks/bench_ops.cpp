#include <benchmark/benchmark.h>

#include "qmvos/ops.hpp"
#include "qmvos/rng.hpp"

using namespace qmvos;

namespace {

Tensor randn(Shape shape, uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> d(static_cast<size_t>(shape_size(shape)));
  for (double& v : d) v = rng.next_normal();
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  const Tensor a = randn({n, n}, 1);
  const Tensor b = randn({n, n}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv2dStride2(benchmark::State& state) {
  const int64_t c = state.range(0);
  const Tensor x = randn({c, 32, 32}, 3);
  const Tensor w = randn({c, c, 3, 3}, 4);
  const Tensor b = randn({c}, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, b, 2, 1));
  }
}
BENCHMARK(BM_Conv2dStride2)->Arg(16)->Arg(32)->Arg(64);

static void BM_Softmax(benchmark::State& state) {
  const Tensor x = randn({64, 1024}, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(x, 1));
  }
}
BENCHMARK(BM_Softmax);

static void BM_Attention(benchmark::State& state) {
  const int64_t m = state.range(0);
  const Tensor q = randn({8, 64}, 7);
  const Tensor k = randn({m, 64}, 8);
  const Tensor v = randn({m, 64}, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaled_dot_attention(q, k, v, true));
  }
}
BENCHMARK(BM_Attention)->Arg(64)->Arg(256)->Arg(1024);

static void BM_Upsample2x(benchmark::State& state) {
  const Tensor x = randn({64, 16, 16}, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bilinear_upsample2x(x));
  }
}
BENCHMARK(BM_Upsample2x);

static void BM_BackwardFfn(benchmark::State& state) {
  const Tensor x = randn({32, 64}, 11);
  const Tensor w1 = randn({64, 128}, 12);
  const Tensor b1 = randn({128}, 13);
  const Tensor w2 = randn({128, 64}, 14);
  const Tensor b2 = randn({64}, 15);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = sum_all(ffn(x, w1, b1, w2, b2, &tape), &tape);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(w1));
  }
}
BENCHMARK(BM_BackwardFfn);
