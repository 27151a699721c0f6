#include "branchy/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace branchy {

void validate_thresholds(const NetworkSpec& net, const ThresholdVector& thresholds) {
  const std::int64_t expected = net.num_exits() - 1;
  if (static_cast<std::int64_t>(thresholds.t.size()) != expected) {
    throw ValidationError("thresholds: expected " + std::to_string(expected) +
                          " entries for " + std::to_string(net.num_exits()) + " exits, got " +
                          std::to_string(thresholds.t.size()));
  }
  for (double v : thresholds.t) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("thresholds: entries must be finite and >= 0");
    }
  }
}

double entropy(const float* probs, std::int64_t n) {
  double h = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = std::max(static_cast<double>(probs[i]), kProbClamp);
    h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    p = std::max(p, kProbClamp);
    h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

MacTable compute_mac_table(const NetworkSpec& net) {
  const NetworkShapes shapes = infer_network_shapes(net, 1);
  MacTable table;

  Shape cur = net.input_shape(1);
  for (std::size_t i = 0; i < net.trunk.size(); ++i) {
    table.trunk_layer.push_back(layer_macs(net.trunk[i], cur));
    cur = shapes.trunk[i];
  }
  table.baseline_total = 0;
  for (std::int64_t m : table.trunk_layer) table.baseline_total += m;

  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    const BranchSpec& br = net.branches[b];
    Shape bcur = shapes.trunk[static_cast<std::size_t>(br.attach_after)];
    std::int64_t total = 0;
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      total += layer_macs(br.layers[j], bcur);
      bcur = shapes.branches[b][j];
    }
    table.branch.push_back(total);
  }

  // Leaving at exit n costs: trunk up to that exit's attach point, plus every
  // branch classifier evaluated on the way (failed gates are real work).
  std::int64_t branches_so_far = 0;
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    branches_so_far += table.branch[b];
    std::int64_t trunk_prefix = 0;
    for (std::int64_t i = 0; i <= net.branches[b].attach_after; ++i) {
      trunk_prefix += table.trunk_layer[static_cast<std::size_t>(i)];
    }
    table.cumulative_exit.push_back(trunk_prefix + branches_so_far);
  }
  table.cumulative_exit.push_back(table.baseline_total + branches_so_far);
  table.full_total = table.cumulative_exit.back();
  return table;
}

namespace {

struct ExitOutcome {
  std::int64_t predicted = 0;
  double ent = 0.0;
};

ExitOutcome classify_logits(const Tensor& logits) {
  const Tensor probs = softmax(logits);
  ExitOutcome out;
  out.ent = entropy(probs.data(), probs.size());
  out.predicted = 0;
  for (std::int64_t j = 1; j < probs.size(); ++j) {
    if (probs[j] > probs[out.predicted]) out.predicted = j;
  }
  return out;
}

}  // namespace

InferenceResult fast_inference(const NetworkSpec& net, const ParameterStore& params,
                               const Tensor& x, const ThresholdVector& thresholds,
                               const MacTable& macs) {
  validate_thresholds(net, thresholds);
  const auto start = std::chrono::steady_clock::now();

  InferenceResult result;
  Tensor cur = x;
  std::int64_t trunk_done = 0;  // trunk layers computed so far (lazy prefix)
  const std::int64_t n_exits = net.num_exits();

  auto run_trunk_to = [&](std::int64_t layer_end) {
    for (; trunk_done <= layer_end; ++trunk_done) {
      auto ref = layer_params_ref(params, trunk_param_prefix(trunk_done));
      cur = layer_forward<float>(net.trunk[static_cast<std::size_t>(trunk_done)], ref, cur, Mode::Infer,
                          nullptr);
    }
  };

  for (std::int64_t n = 1; n < n_exits; ++n) {
    const BranchSpec& br = net.branches[static_cast<std::size_t>(n - 1)];
    run_trunk_to(br.attach_after);
    Tensor blogits = cur;
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      auto ref = layer_params_ref(params,
                                  branch_param_prefix(br.exit_index, static_cast<std::int64_t>(j)));
      blogits = layer_forward<float>(br.layers[j], ref, blogits, Mode::Infer, nullptr);
    }
    const ExitOutcome out = classify_logits(blogits);
    result.decision.entropies.push_back(out.ent);
    if (out.ent < thresholds.t[static_cast<std::size_t>(n - 1)]) {
      result.decision.predicted_class = out.predicted;
      result.decision.exit_index = n;
      result.decision.exit_entropy = out.ent;
      result.cost.macs_evaluated = macs.cumulative_exit[static_cast<std::size_t>(n - 1)];
      result.cost.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return result;
    }
  }

  run_trunk_to(static_cast<std::int64_t>(net.trunk.size()) - 1);
  const ExitOutcome out = classify_logits(cur);
  result.decision.entropies.push_back(out.ent);
  result.decision.predicted_class = out.predicted;
  result.decision.exit_index = n_exits;
  result.decision.exit_entropy = out.ent;
  result.cost.macs_evaluated = macs.cumulative_exit[static_cast<std::size_t>(n_exits - 1)];
  result.cost.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

EvalReport evaluate(const NetworkSpec& net, const ParameterStore& params,
                    const std::vector<LabeledExample>& dataset,
                    const ThresholdVector& thresholds, const TraceFn& trace) {
  if (dataset.empty()) throw ValidationError("evaluate: dataset is empty");
  validate_thresholds(net, thresholds);
  const MacTable macs = compute_mac_table(net);

  EvalReport report;
  report.thresholds = thresholds;
  report.exit_fractions.assign(static_cast<std::size_t>(net.num_exits()), 0.0);
  report.num_samples = static_cast<std::int64_t>(dataset.size());

  std::int64_t correct = 0;
  double mac_sum = 0.0;
  double wall_sum = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const InferenceResult r = fast_inference(net, params, dataset[i].image, thresholds, macs);
    if (r.decision.predicted_class == dataset[i].label) ++correct;
    report.exit_fractions[static_cast<std::size_t>(r.decision.exit_index - 1)] += 1.0;
    mac_sum += static_cast<double>(r.cost.macs_evaluated);
    wall_sum += r.cost.wall_seconds;
    if (trace) trace(static_cast<std::int64_t>(i), r.decision, r.cost, dataset[i].label);
  }
  const double n = static_cast<double>(dataset.size());
  for (double& f : report.exit_fractions) f /= n;
  report.accuracy = static_cast<double>(correct) / n;
  report.expected_macs = mac_sum / n;
  report.speedup = static_cast<double>(macs.baseline_total) / report.expected_macs;
  report.mean_wall_seconds = wall_sum / n;
  return report;
}

}  // namespace branchy
