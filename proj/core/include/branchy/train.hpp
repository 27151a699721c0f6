#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "branchy/adam.hpp"
#include "branchy/dataset.hpp"
#include "branchy/graph.hpp"

namespace branchy {

struct TrainConfig {
  std::int64_t epochs = 15;
  std::int64_t batch_size = 64;
  AdamConfig adam;           // alpha 0.001, beta1 0.99, beta2 0.999, eps 1e-8
  ExitWeights exit_weights;  // one weight per exit; baseline training uses {1}
  std::uint64_t seed = 42;
};

void validate_train_config(const TrainConfig& cfg);

// One metrics row: per epoch, per split, per exit.
struct EpochMetric {
  std::int64_t epoch = 0;
  std::string split;  // "train" or "validation"
  std::int64_t exit_index = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  ParameterStore params;
  std::vector<EpochMetric> metrics;
};

// Assembles examples[indices[first..first+count)] into a [count,1,H,W] batch.
Tensor make_batch(const std::vector<LabeledExample>& examples,
                  const std::vector<std::int64_t>& indices, std::int64_t first,
                  std::int64_t count);

Tensor make_onehot(const std::vector<LabeledExample>& examples,
                   const std::vector<std::int64_t>& indices, std::int64_t first,
                   std::int64_t count, std::int64_t num_classes);

// Per-exit loss/accuracy of a frozen model over a dataset (batched forward).
struct ExitEval {
  std::vector<double> loss;
  std::vector<double> accuracy;
};
ExitEval evaluate_all_exits(const NetworkSpec& net, const ParameterStore& params,
                            const std::vector<LabeledExample>& examples,
                            std::int64_t batch_size = 256);

// Phase 1: trains a branch-free trunk. Deterministic for a fixed seed.
TrainResult train_baseline(const NetworkSpec& net, const std::vector<LabeledExample>& train,
                           const std::vector<LabeledExample>& validation, const TrainConfig& cfg,
                           std::ostream* progress = nullptr);

// Warm start for phase 2: trunk parameters are copied bitwise from the
// baseline store, branch parameters are freshly initialized from the seed.
ParameterStore init_branchy_from_baseline(const NetworkSpec& branchy_net,
                                          const NetworkSpec& baseline_net,
                                          const ParameterStore& baseline_params,
                                          std::uint64_t seed);

// Phase 2: joint training of all exits from a warm-started store.
TrainResult train_branchy(const NetworkSpec& net, ParameterStore warm_start,
                          const std::vector<LabeledExample>& train,
                          const std::vector<LabeledExample>& validation, const TrainConfig& cfg,
                          std::ostream* progress = nullptr);

// Writes metrics as CSV (epoch, split, exit, loss, accuracy).
void write_metrics_csv(const std::string& path, const std::vector<EpochMetric>& metrics,
                       bool timestamp_header);

}  // namespace branchy
