#include "branchy/train.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <numeric>
#include <ostream>

#include "branchy/csv.hpp"

namespace branchy {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  validate_adam_config(cfg.adam);
}

Tensor make_batch(const std::vector<LabeledExample>& examples,
                  const std::vector<std::int64_t>& indices, std::int64_t first,
                  std::int64_t count) {
  const Shape& img = examples[static_cast<std::size_t>(indices[static_cast<std::size_t>(first)])]
                         .image.shape();
  Tensor batch(Shape{count, img.extent(1), img.extent(2), img.extent(3)});
  const std::int64_t stride = img.elements();
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& ex = examples[static_cast<std::size_t>(indices[static_cast<std::size_t>(first + i)])];
    if (ex.image.shape() != img) {
      throw DimensionError("batch: example image " + ex.image.shape().str() +
                           " does not match " + img.str());
    }
    std::copy_n(ex.image.data(), stride, batch.data() + i * stride);
  }
  return batch;
}

Tensor make_onehot(const std::vector<LabeledExample>& examples,
                   const std::vector<std::int64_t>& indices, std::int64_t first,
                   std::int64_t count, std::int64_t num_classes) {
  Tensor onehot(Shape{count, num_classes});
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& ex = examples[static_cast<std::size_t>(indices[static_cast<std::size_t>(first + i)])];
    if (ex.label < 0 || ex.label >= num_classes) {
      throw ValidationError("label " + std::to_string(ex.label) + " outside 0.." +
                            std::to_string(num_classes - 1));
    }
    onehot.at(i, ex.label) = 1.0f;
  }
  return onehot;
}

namespace {

std::int64_t argmax_row(const Tensor& t, std::int64_t row) {
  std::int64_t best = 0;
  for (std::int64_t j = 1; j < t.shape().extent(1); ++j) {
    if (t.at(row, j) > t.at(row, best)) best = j;
  }
  return best;
}

struct RunningExitStats {
  std::vector<double> loss_sum;
  std::vector<std::int64_t> correct;
  std::int64_t count = 0;

  explicit RunningExitStats(std::int64_t exits)
      : loss_sum(static_cast<std::size_t>(exits), 0.0),
        correct(static_cast<std::size_t>(exits), 0) {}

  void update(const std::vector<Tensor>& logits, const Tensor& onehot,
              const std::vector<LabeledExample>& examples,
              const std::vector<std::int64_t>& indices, std::int64_t first, std::int64_t n) {
    for (std::size_t e = 0; e < logits.size(); ++e) {
      const LossGrad<float> lg = cross_entropy(softmax(logits[e]), onehot);
      loss_sum[e] += lg.loss * static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& ex =
            examples[static_cast<std::size_t>(indices[static_cast<std::size_t>(first + i)])];
        if (argmax_row(logits[e], i) == ex.label) ++correct[e];
      }
    }
    count += n;
  }
};

void append_metrics(std::vector<EpochMetric>& rows, std::int64_t epoch, const std::string& split,
                    const RunningExitStats& stats) {
  for (std::size_t e = 0; e < stats.loss_sum.size(); ++e) {
    EpochMetric m;
    m.epoch = epoch;
    m.split = split;
    m.exit_index = static_cast<std::int64_t>(e) + 1;
    m.loss = stats.count ? stats.loss_sum[e] / static_cast<double>(stats.count) : 0.0;
    m.accuracy = stats.count ? static_cast<double>(stats.correct[e]) /
                                   static_cast<double>(stats.count)
                             : 0.0;
    rows.push_back(std::move(m));
  }
}

TrainResult train_network(const NetworkSpec& net, ParameterStore params,
                          const std::vector<LabeledExample>& train,
                          const std::vector<LabeledExample>& validation, const TrainConfig& cfg,
                          const ExitWeights& weights, std::ostream* progress) {
  validate_network(net);
  validate_train_config(cfg);
  validate_exit_weights(net, weights);
  if (train.empty()) throw ValidationError("train: dataset is empty");

  const std::int64_t n_exits = net.num_exits();
  Adam optimizer(params, cfg.adam);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5f0f));

  std::vector<std::int64_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  NetworkCache<float> cache;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    RunningExitStats stats(n_exits);
    const std::int64_t n = static_cast<std::int64_t>(train.size());
    for (std::int64_t first = 0; first < n; first += cfg.batch_size) {
      const std::int64_t count = std::min(cfg.batch_size, n - first);
      Tensor x = make_batch(train, order, first, count);
      Tensor y = make_onehot(train, order, first, count, net.num_classes);
      std::vector<Tensor> logits = forward_all_exits(net, params, x, Mode::Train, &cache);
      stats.update(logits, y, train, order, first, count);
      if (cfg.adam.alpha > 0.0) {
        backward_joint(net, params, cache, y, weights);
        optimizer.step(params);
      }
    }
    append_metrics(result.metrics, epoch, "train", stats);

    if (!validation.empty()) {
      const ExitEval val = evaluate_all_exits(net, params, validation);
      for (std::int64_t e = 0; e < n_exits; ++e) {
        result.metrics.push_back(EpochMetric{epoch, "validation", e + 1,
                                             val.loss[static_cast<std::size_t>(e)],
                                             val.accuracy[static_cast<std::size_t>(e)]});
      }
      if (progress) {
        *progress << "epoch " << epoch << ": train loss "
                  << stats.loss_sum.back() / std::max<std::int64_t>(stats.count, 1);
        for (std::int64_t e = 0; e < n_exits; ++e) {
          *progress << ", val acc exit" << (e + 1) << " "
                    << val.accuracy[static_cast<std::size_t>(e)];
        }
        *progress << "\n";
        progress->flush();
      }
    } else if (progress) {
      *progress << "epoch " << epoch << ": train loss "
                << stats.loss_sum.back() / std::max<std::int64_t>(stats.count, 1) << "\n";
      progress->flush();
    }
  }
  result.params = std::move(params);
  return result;
}

}  // namespace

ExitEval evaluate_all_exits(const NetworkSpec& net, const ParameterStore& params,
                            const std::vector<LabeledExample>& examples,
                            std::int64_t batch_size) {
  if (examples.empty()) throw ValidationError("evaluate_all_exits: dataset is empty");
  const std::int64_t n_exits = net.num_exits();
  RunningExitStats stats(n_exits);
  std::vector<std::int64_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::int64_t n = static_cast<std::int64_t>(examples.size());
  for (std::int64_t first = 0; first < n; first += batch_size) {
    const std::int64_t count = std::min(batch_size, n - first);
    Tensor x = make_batch(examples, order, first, count);
    Tensor y = make_onehot(examples, order, first, count, net.num_classes);
    std::vector<Tensor> logits = forward_all_exits<float>(net, params, x, Mode::Infer, nullptr);
    stats.update(logits, y, examples, order, first, count);
  }
  ExitEval eval;
  eval.loss.resize(static_cast<std::size_t>(n_exits));
  eval.accuracy.resize(static_cast<std::size_t>(n_exits));
  for (std::int64_t e = 0; e < n_exits; ++e) {
    eval.loss[static_cast<std::size_t>(e)] =
        stats.loss_sum[static_cast<std::size_t>(e)] / static_cast<double>(stats.count);
    eval.accuracy[static_cast<std::size_t>(e)] =
        static_cast<double>(stats.correct[static_cast<std::size_t>(e)]) /
        static_cast<double>(stats.count);
  }
  return eval;
}

TrainResult train_baseline(const NetworkSpec& net, const std::vector<LabeledExample>& train,
                           const std::vector<LabeledExample>& validation, const TrainConfig& cfg,
                           std::ostream* progress) {
  if (!net.branches.empty()) {
    throw ValidationError("train_baseline: network must have no branches (got " +
                          std::to_string(net.branches.size()) + ")");
  }
  Rng init_rng(derive_seed(cfg.seed, 0x1217));
  ParameterStore params = init_params<float>(net, init_rng);
  ExitWeights weights{{1.0}};
  return train_network(net, std::move(params), train, validation, cfg, weights, progress);
}

ParameterStore init_branchy_from_baseline(const NetworkSpec& branchy_net,
                                          const NetworkSpec& baseline_net,
                                          const ParameterStore& baseline_params,
                                          std::uint64_t seed) {
  validate_network(branchy_net);
  if (branchy_net.trunk != baseline_net.trunk) {
    std::string diff;
    const std::size_t n = std::max(branchy_net.trunk.size(), baseline_net.trunk.size());
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_branchy = i < branchy_net.trunk.size();
      const bool in_baseline = i < baseline_net.trunk.size();
      if (!in_branchy || !in_baseline || branchy_net.trunk[i] != baseline_net.trunk[i]) {
        if (!diff.empty()) diff += ", ";
        diff += std::to_string(i);
        diff += " (";
        diff += in_branchy ? layer_kind_name(branchy_net.trunk[i]) : "missing";
        diff += " vs ";
        diff += in_baseline ? layer_kind_name(baseline_net.trunk[i]) : "missing";
        diff += ")";
      }
    }
    throw ValidationError("warm start: trunk layers differ at " + diff);
  }

  const NetworkShapes shapes = infer_network_shapes(branchy_net);
  ParameterStore params;
  // Trunk entries come over bitwise, in the baseline's declaration order.
  for (std::size_t i = 0; i < branchy_net.trunk.size(); ++i) {
    const std::string prefix = trunk_param_prefix(static_cast<std::int64_t>(i));
    for (const char* field : {".weight", ".bias"}) {
      const std::int64_t idx = baseline_params.index_of(prefix + field);
      if (layer_has_params(branchy_net.trunk[i])) {
        if (idx < 0) {
          throw ValidationError("warm start: baseline store is missing " + prefix + field);
        }
        params.add(prefix + field, baseline_params.entry(idx).value);
      }
    }
  }
  Rng rng(derive_seed(seed, 0xb7a9c4));
  for (const BranchSpec& br : branchy_net.branches) {
    Shape cur = shapes.trunk[static_cast<std::size_t>(br.attach_after)];
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      init_layer_params(br.layers[j], cur,
                        branch_param_prefix(br.exit_index, static_cast<std::int64_t>(j)), params,
                        rng);
      cur = infer_layer_shape(br.layers[j], cur);
    }
  }
  return params;
}

TrainResult train_branchy(const NetworkSpec& net, ParameterStore warm_start,
                          const std::vector<LabeledExample>& train,
                          const std::vector<LabeledExample>& validation, const TrainConfig& cfg,
                          std::ostream* progress) {
  ExitWeights weights = cfg.exit_weights;
  if (weights.w.empty()) {
    weights.w.assign(static_cast<std::size_t>(net.num_exits()), 1.0);
  }
  return train_network(net, std::move(warm_start), train, validation, cfg, weights, progress);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetric>& metrics,
                       bool timestamp_header) {
  CsvWriter csv(path, timestamp_header);
  csv.row("epoch", "split", "exit", "loss", "accuracy");
  for (const EpochMetric& m : metrics) {
    csv.row(m.epoch, m.split, m.exit_index, m.loss, m.accuracy);
  }
  csv.close();
}

}  // namespace branchy
