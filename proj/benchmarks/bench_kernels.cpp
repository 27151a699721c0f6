#include <benchmark/benchmark.h>

#include "branchy/kernels.hpp"
#include "branchy/rng.hpp"

using namespace branchy;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = float(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const Tensor a = random_tensor(Shape{n, n}, 1);
  const Tensor b = random_tensor(Shape{n, n}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

// The three conv shapes of the default digit network, batch 64.
void BM_Conv2d(benchmark::State& state) {
  const std::int64_t layer = state.range(0);
  Tensor input, kernel, bias;
  switch (layer) {
    case 0:
      input = random_tensor(Shape{64, 1, 28, 28}, 3);
      kernel = random_tensor(Shape{20, 1, 5, 5}, 4);
      bias = Tensor(Shape{20});
      break;
    case 1:
      input = random_tensor(Shape{64, 20, 12, 12}, 5);
      kernel = random_tensor(Shape{50, 20, 5, 5}, 6);
      bias = Tensor(Shape{50});
      break;
    default:
      input = random_tensor(Shape{64, 50, 4, 4}, 7);
      kernel = random_tensor(Shape{50, 50, 3, 3}, 8);
      bias = Tensor(Shape{50});
      break;
  }
  std::int64_t macs = 0;
  for (auto _ : state) {
    Tensor out = conv2d(input, kernel, bias, 1, 0);
    benchmark::DoNotOptimize(out.data());
    macs = out.shape().extent(1) * out.shape().extent(2) * out.shape().extent(3) *
           input.shape().extent(1) * kernel.shape().extent(2) * kernel.shape().extent(3) *
           input.shape().extent(0);
  }
  state.SetItemsProcessed(state.iterations() * macs);
}
BENCHMARK(BM_Conv2d)->Arg(0)->Arg(1)->Arg(2);

void BM_MaxPool(benchmark::State& state) {
  const Tensor input = random_tensor(Shape{64, 20, 24, 24}, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(maxpool2d(input, 2, 2));
  }
}
BENCHMARK(BM_MaxPool);

}  // namespace
