#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "branchy/dataset.hpp"
#include "branchy/graph.hpp"

namespace branchy {

// Per-exit entropy thresholds. Exit N is unconditional, so a network with N
// exits carries N-1 entries.
struct ThresholdVector {
  std::vector<double> t;
};

void validate_thresholds(const NetworkSpec& net, const ThresholdVector& thresholds);

// Shannon entropy in nats of a probability vector, with probabilities
// clamped to >= 1e-12 before the log. Bounded by ln(n).
double entropy(const float* probs, std::int64_t n);
double entropy(const std::vector<double>& probs);

// Static multiply-accumulate costs of a network at batch size 1.
struct MacTable {
  std::vector<std::int64_t> trunk_layer;      // per trunk layer
  std::vector<std::int64_t> branch;           // per branch (all its layers)
  std::vector<std::int64_t> cumulative_exit;  // cost of leaving at exit n (1-based: [n-1])
  std::int64_t baseline_total = 0;            // the trunk alone
  std::int64_t full_total = 0;                // trunk plus every branch
};
MacTable compute_mac_table(const NetworkSpec& net);

struct ExitDecision {
  std::int64_t predicted_class = 0;
  std::int64_t exit_index = 0;            // 1-based
  double exit_entropy = 0.0;              // entropy at the exit taken
  std::vector<double> entropies;          // entropy of every exit evaluated
};

struct CostReport {
  std::int64_t macs_evaluated = 0;
  double wall_seconds = 0.0;  // batch-size-1 wall clock of this call
};

struct InferenceResult {
  ExitDecision decision;
  CostReport cost;
};

// Sequential exit evaluation with entropy gating: walks exits 1..N in order,
// computing trunk layers lazily and reusing the shared prefix, and returns at
// the first exit whose entropy falls below its threshold (exit N always
// returns). Ties in the argmax break toward the lowest class index.
InferenceResult fast_inference(const NetworkSpec& net, const ParameterStore& params,
                               const Tensor& x, const ThresholdVector& thresholds,
                               const MacTable& macs);

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> exit_fractions;  // per exit, sums to 1
  double expected_macs = 0.0;          // mean per-sample MACs actually executed
  double speedup = 0.0;                // baseline_total / expected_macs
  double mean_wall_seconds = 0.0;
  std::int64_t num_samples = 0;
  ThresholdVector thresholds;
};

// Trace hook: called once per sample with (sample index, decision, cost,
// true label).
using TraceFn =
    std::function<void(std::int64_t, const ExitDecision&, const CostReport&, std::int64_t)>;

// Runs fast_inference over a dataset at batch size 1 and aggregates
// accuracy, exit fractions, expected cost and the MAC-based speedup over the
// plain trunk.
EvalReport evaluate(const NetworkSpec& net, const ParameterStore& params,
                    const std::vector<LabeledExample>& dataset,
                    const ThresholdVector& thresholds, const TraceFn& trace = nullptr);

}  // namespace branchy
