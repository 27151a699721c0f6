#include "branchy/sweep.hpp"

#include <algorithm>
#include <cmath>

#include "branchy/csv.hpp"

namespace branchy {

std::vector<std::vector<double>> default_grid(std::int64_t num_thresholds,
                                              std::int64_t num_classes, std::int64_t points) {
  if (num_thresholds < 0) throw ValidationError("grid: negative threshold count");
  std::vector<double> coord;
  coord.push_back(0.0);
  const double lo = 1e-4;
  const double hi = std::log(static_cast<double>(num_classes));
  for (std::int64_t i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0
                                 : static_cast<double>(i) / static_cast<double>(points - 1);
    coord.push_back(lo * std::pow(hi / lo, f));
  }
  return std::vector<std::vector<double>>(static_cast<std::size_t>(num_thresholds), coord);
}

SweepReport sweep(const NetworkSpec& net, const ParameterStore& params,
                  const std::vector<LabeledExample>& dataset,
                  const std::vector<std::vector<double>>& grid, double accuracy_slack_pp) {
  validate_network(net);
  if (dataset.empty()) throw ValidationError("sweep: dataset is empty");
  const std::int64_t n_thresholds = net.num_exits() - 1;
  if (static_cast<std::int64_t>(grid.size()) != n_thresholds) {
    throw ValidationError("sweep: grid has " + std::to_string(grid.size()) +
                          " coordinates, network needs " + std::to_string(n_thresholds));
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].empty()) {
      throw ValidationError("sweep: grid coordinate " + std::to_string(i + 1) + " is empty");
    }
  }

  SweepReport report;
  const MacTable macs = compute_mac_table(net);
  report.baseline_macs = macs.baseline_total;

  // Gate-closed evaluation doubles as the baseline: with all thresholds at
  // zero every sample reaches the trunk head, so its predictions are the
  // plain trunk's.
  const ThresholdVector closed{std::vector<double>(static_cast<std::size_t>(n_thresholds), 0.0)};
  report.baseline_accuracy = evaluate(net, params, dataset, closed).accuracy;

  std::int64_t total_points = 1;
  for (const auto& coord : grid) {
    total_points *= static_cast<std::int64_t>(coord.size());
  }
  report.points.reserve(static_cast<std::size_t>(total_points));

  // Cartesian product in odometer order, last coordinate fastest.
  std::vector<std::size_t> idx(grid.size(), 0);
  for (std::int64_t p = 0; p < total_points; ++p) {
    ThresholdVector t;
    t.t.reserve(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) t.t.push_back(grid[c][idx[c]]);

    const EvalReport eval = evaluate(net, params, dataset, t);
    SweepPoint point;
    point.thresholds = t.t;
    point.accuracy = eval.accuracy;
    point.expected_macs = eval.expected_macs;
    point.speedup = eval.speedup;
    point.exit_fractions = eval.exit_fractions;
    report.points.push_back(std::move(point));

    for (std::size_t c = grid.size(); c-- > 0;) {
      if (++idx[c] < grid[c].size()) break;
      idx[c] = 0;
    }
  }

  const KneeSelection sel = select_knee(report, accuracy_slack_pp);
  report.knee = sel.index;
  report.knee_status = sel.status;
  return report;
}

KneeSelection select_knee(const SweepReport& report, double accuracy_slack_pp) {
  if (report.points.empty()) throw ValidationError("select_knee: empty report");
  const double floor = report.baseline_accuracy - accuracy_slack_pp / 100.0;

  auto better = [](const SweepPoint& a, const SweepPoint& b) {
    if (a.expected_macs != b.expected_macs) return a.expected_macs < b.expected_macs;
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.thresholds < b.thresholds;
  };

  KneeSelection sel;
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    if (report.points[i].accuracy < floor) continue;
    if (sel.index < 0 || better(report.points[i], report.points[static_cast<std::size_t>(sel.index)])) {
      sel.index = static_cast<std::int64_t>(i);
    }
  }
  if (sel.index >= 0) {
    sel.status = KneeStatus::Ok;
    return sel;
  }

  // Nothing within slack: fall back to the most accurate point and say so.
  sel.status = KneeStatus::NoPointWithinSlack;
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    if (sel.index < 0) {
      sel.index = static_cast<std::int64_t>(i);
      continue;
    }
    const SweepPoint& cur = report.points[i];
    const SweepPoint& best = report.points[static_cast<std::size_t>(sel.index)];
    if (cur.accuracy > best.accuracy ||
        (cur.accuracy == best.accuracy && better(cur, best))) {
      sel.index = static_cast<std::int64_t>(i);
    }
  }
  return sel;
}

void write_sweep_csv(const std::string& path, const SweepReport& report, bool timestamp_header) {
  CsvWriter csv(path, timestamp_header);
  csv.raw_line("# baseline_accuracy=" + format_number(report.baseline_accuracy) +
               " baseline_macs=" + format_number(report.baseline_macs));
  std::string header;
  const std::size_t n_thresholds = report.points.empty() ? 0 : report.points[0].thresholds.size();
  for (std::size_t i = 1; i <= n_thresholds; ++i) header += "t_" + std::to_string(i) + ",";
  header += "accuracy,expected_macs,speedup";
  const std::size_t n_exits = report.points.empty() ? 0 : report.points[0].exit_fractions.size();
  for (std::size_t i = 1; i <= n_exits; ++i) header += ",exit_frac_" + std::to_string(i);
  header += ",knee";
  csv.raw_line(header);
  for (std::size_t p = 0; p < report.points.size(); ++p) {
    const SweepPoint& pt = report.points[p];
    std::string line;
    for (double t : pt.thresholds) line += format_number(t) + ",";
    line += format_number(pt.accuracy) + "," + format_number(pt.expected_macs) + "," +
            format_number(pt.speedup);
    for (double f : pt.exit_fractions) line += "," + format_number(f);
    line += static_cast<std::int64_t>(p) == report.knee ? ",1" : ",0";
    csv.raw_line(line);
  }
  csv.close();
}

}  // namespace branchy
