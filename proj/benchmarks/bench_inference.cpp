#include <benchmark/benchmark.h>

#include <cmath>

#include "branchy/inference.hpp"

using namespace branchy;

namespace {

// Default two-exit digit network on random weights; measures the batch-1
// latency gap between taking the first exit and running the whole trunk.
struct Fixture {
  NetworkSpec net;
  ParameterStore params;
  MacTable macs;
  Tensor x;

  Fixture() {
    net.in_channels = 1;
    net.in_height = 28;
    net.in_width = 28;
    net.num_classes = 10;
    net.trunk = {ConvSpec{20, 5, 1, 0}, MaxPoolSpec{2, 2}, ConvSpec{50, 5, 1, 0},
                 MaxPoolSpec{2, 2},     ConvSpec{50, 3, 1, 0}, FlattenSpec{},
                 DenseSpec{500},        ReluSpec{},         DenseSpec{10}};
    BranchSpec branch;
    branch.attach_after = 1;
    branch.exit_index = 1;
    branch.layers = {ConvSpec{10, 3, 1, 0}, MaxPoolSpec{2, 2}, FlattenSpec{}, DenseSpec{10}};
    net.branches = {branch};

    Rng rng(17);
    params = init_params<float>(net, rng);
    macs = compute_mac_table(net);
    x = Tensor(net.input_shape(1));
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(0.0, 1.0));
  }
};

void BM_FastInference_FirstExit(benchmark::State& state) {
  Fixture fx;
  const ThresholdVector open{{std::log(10.0) + 1.0}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(fast_inference(fx.net, fx.params, fx.x, open, fx.macs));
  }
}
BENCHMARK(BM_FastInference_FirstExit);

void BM_FastInference_FullNetwork(benchmark::State& state) {
  Fixture fx;
  const ThresholdVector closed{{0.0}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(fast_inference(fx.net, fx.params, fx.x, closed, fx.macs));
  }
}
BENCHMARK(BM_FastInference_FullNetwork);

}  // namespace
