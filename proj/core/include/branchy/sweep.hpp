#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "branchy/inference.hpp"

namespace branchy {

struct SweepPoint {
  std::vector<double> thresholds;
  double accuracy = 0.0;
  double expected_macs = 0.0;
  double speedup = 0.0;
  std::vector<double> exit_fractions;
};

enum class KneeStatus {
  Ok,                  // the knee satisfies the accuracy constraint
  NoPointWithinSlack,  // nothing qualified; knee fell back to max accuracy
};

struct SweepReport {
  std::vector<SweepPoint> points;
  std::int64_t knee = -1;
  KneeStatus knee_status = KneeStatus::Ok;
  double baseline_accuracy = 0.0;   // trunk-head predictions on the same split
  std::int64_t baseline_macs = 0;   // the trunk alone
};

// Default screening grid per threshold coordinate: 0 plus `points` values
// log-spaced over [1e-4, ln(num_classes)].
std::vector<std::vector<double>> default_grid(std::int64_t num_thresholds,
                                              std::int64_t num_classes,
                                              std::int64_t points = 25);

// Evaluates the Cartesian product of per-coordinate candidate values on the
// given split (last coordinate fastest) and selects the knee. Deterministic
// point ordering.
SweepReport sweep(const NetworkSpec& net, const ParameterStore& params,
                  const std::vector<LabeledExample>& dataset,
                  const std::vector<std::vector<double>>& grid, double accuracy_slack_pp = 0.5);

struct KneeSelection {
  std::int64_t index = -1;
  KneeStatus status = KneeStatus::Ok;
};

// Cheapest point whose accuracy stays within `accuracy_slack_pp` percentage
// points of the baseline; ties break toward higher accuracy, then
// lexicographically lower thresholds. Falls back to the most accurate point
// (flagged) when nothing qualifies.
KneeSelection select_knee(const SweepReport& report, double accuracy_slack_pp = 0.5);

// One row per point: t_1..t_{N-1}, accuracy, expected_macs, speedup,
// exit_frac_1..N, knee flag.
void write_sweep_csv(const std::string& path, const SweepReport& report, bool timestamp_header);

}  // namespace branchy
