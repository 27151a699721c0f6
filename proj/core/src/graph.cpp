#include "branchy/graph.hpp"

#include <algorithm>

namespace branchy {

std::string trunk_param_prefix(std::int64_t layer) {
  return "trunk." + std::to_string(layer);
}

std::string branch_param_prefix(std::int64_t exit_index, std::int64_t layer) {
  return "branch" + std::to_string(exit_index) + "." + std::to_string(layer);
}

namespace {

[[noreturn]] void rethrow_with_location(const std::string& where, const Error& e) {
  throw DimensionError(where + ": " + e.what());
}

}  // namespace

void validate_network(const NetworkSpec& net) {
  if (net.trunk.empty()) {
    throw ValidationError("network: no trunk defined");
  }
  if (net.in_channels < 1 || net.in_height < 1 || net.in_width < 1) {
    throw ValidationError("network: input extents must be >= 1");
  }
  if (net.num_classes < 2) {
    throw ValidationError("network: num_classes must be >= 2");
  }
  for (std::size_t i = 0; i < net.trunk.size(); ++i) {
    try {
      validate_layer(net.trunk[i]);
    } catch (const Error& e) {
      throw ValidationError("trunk layer " + std::to_string(i) + ": " + e.what());
    }
  }
  const auto* head = std::get_if<DenseSpec>(&net.trunk.back());
  if (head == nullptr || head->features != net.num_classes) {
    throw ValidationError("network: trunk must end in dense(" +
                          std::to_string(net.num_classes) + ")");
  }

  std::int64_t prev_attach = -1;
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    const BranchSpec& br = net.branches[b];
    const std::string name = "branch " + std::to_string(b + 1);
    if (br.exit_index != static_cast<std::int64_t>(b) + 1) {
      throw ValidationError(name + ": exit_index must be " + std::to_string(b + 1) + ", got " +
                            std::to_string(br.exit_index));
    }
    if (br.attach_after < 0 ||
        br.attach_after >= static_cast<std::int64_t>(net.trunk.size()) - 1) {
      throw ValidationError(name + ": attach_after " + std::to_string(br.attach_after) +
                            " must lie before the trunk head (0.." +
                            std::to_string(net.trunk.size() - 2) + ")");
    }
    // One-level branches only, and no two branches may share a trunk segment
    // boundary: attach points strictly increase with the exit number.
    if (br.attach_after <= prev_attach) {
      throw ValidationError(name + ": attach point " + std::to_string(br.attach_after) +
                            " does not strictly increase over the previous branch");
    }
    prev_attach = br.attach_after;
    if (br.layers.empty()) {
      throw ValidationError(name + ": no layers");
    }
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      try {
        validate_layer(br.layers[j]);
      } catch (const Error& e) {
        throw ValidationError(name + " layer " + std::to_string(j) + ": " + e.what());
      }
    }
    const auto* exit_head = std::get_if<DenseSpec>(&br.layers.back());
    if (exit_head == nullptr || exit_head->features != net.num_classes) {
      throw ValidationError(name + ": must end in dense(" + std::to_string(net.num_classes) +
                            ")");
    }
  }

  infer_network_shapes(net);  // shape chain check
}

NetworkShapes infer_network_shapes(const NetworkSpec& net, std::int64_t batch) {
  NetworkShapes shapes;
  shapes.trunk.reserve(net.trunk.size());
  Shape cur = net.input_shape(batch);
  for (std::size_t i = 0; i < net.trunk.size(); ++i) {
    try {
      cur = infer_layer_shape(net.trunk[i], cur);
    } catch (const Error& e) {
      rethrow_with_location("trunk layer " + std::to_string(i) + " (" +
                                layer_kind_name(net.trunk[i]) + ")",
                            e);
    }
    shapes.trunk.push_back(cur);
  }
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    const BranchSpec& br = net.branches[b];
    Shape bcur = shapes.trunk[static_cast<std::size_t>(br.attach_after)];
    std::vector<Shape> bshapes;
    bshapes.reserve(br.layers.size());
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      try {
        bcur = infer_layer_shape(br.layers[j], bcur);
      } catch (const Error& e) {
        rethrow_with_location("branch " + std::to_string(b + 1) + " layer " + std::to_string(j) +
                                  " (" + layer_kind_name(br.layers[j]) + ")",
                              e);
      }
      bshapes.push_back(bcur);
    }
    shapes.branches.push_back(std::move(bshapes));
  }
  return shapes;
}

template <typename T>
ParameterStoreT<T> init_params(const NetworkSpec& net, Rng& rng) {
  ParameterStoreT<T> store;
  Shape cur = net.input_shape();
  for (std::size_t i = 0; i < net.trunk.size(); ++i) {
    init_layer_params(net.trunk[i], cur, trunk_param_prefix(static_cast<std::int64_t>(i)), store,
                      rng);
    cur = infer_layer_shape(net.trunk[i], cur);
  }
  const NetworkShapes shapes = infer_network_shapes(net);
  for (const BranchSpec& br : net.branches) {
    Shape bcur = shapes.trunk[static_cast<std::size_t>(br.attach_after)];
    for (std::size_t j = 0; j < br.layers.size(); ++j) {
      init_layer_params(br.layers[j], bcur,
                        branch_param_prefix(br.exit_index, static_cast<std::int64_t>(j)), store,
                        rng);
      bcur = infer_layer_shape(br.layers[j], bcur);
    }
  }
  return store;
}

namespace {

template <typename T>
TensorT<T> run_branch(const NetworkSpec& net, const BranchSpec& br,
                      const ParameterStoreT<T>& params, const TensorT<T>& attach_activation,
                      Mode mode, std::vector<LayerCache<T>>* caches) {
  TensorT<T> cur = attach_activation;
  for (std::size_t j = 0; j < br.layers.size(); ++j) {
    LayerCache<T>* cache = caches ? &(*caches)[j] : nullptr;
    auto ref = layer_params_ref(params, branch_param_prefix(br.exit_index,
                                                            static_cast<std::int64_t>(j)));
    try {
      cur = layer_forward(br.layers[j], ref, cur, mode, cache);
    } catch (const Error& e) {
      rethrow_with_location("branch " + std::to_string(br.exit_index) + " layer " +
                                std::to_string(j) + " (" + layer_kind_name(br.layers[j]) + ")",
                            e);
    }
  }
  (void)net;
  return cur;
}

}  // namespace

template <typename T>
std::vector<TensorT<T>> forward_all_exits(const NetworkSpec& net,
                                          const ParameterStoreT<T>& params, const TensorT<T>& x,
                                          Mode mode, NetworkCache<T>* cache) {
  if (mode == Mode::Train && cache == nullptr) {
    throw StateError("forward_all_exits: train mode requires a cache");
  }
  if (cache) {
    cache->trunk.assign(net.trunk.size(), LayerCache<T>{});
    cache->branches.clear();
    for (const BranchSpec& br : net.branches) {
      cache->branches.emplace_back(br.layers.size());
    }
    cache->logits.clear();
  }

  const std::int64_t n_exits = net.num_exits();
  std::vector<TensorT<T>> logits(static_cast<std::size_t>(n_exits));

  TensorT<T> cur = x;
  std::size_t next_branch = 0;
  for (std::size_t i = 0; i < net.trunk.size(); ++i) {
    auto ref = layer_params_ref(params, trunk_param_prefix(static_cast<std::int64_t>(i)));
    LayerCache<T>* lc = cache ? &cache->trunk[i] : nullptr;
    try {
      cur = layer_forward(net.trunk[i], ref, cur, mode, lc);
    } catch (const Error& e) {
      rethrow_with_location("trunk layer " + std::to_string(i) + " (" +
                                layer_kind_name(net.trunk[i]) + ")",
                            e);
    }
    while (next_branch < net.branches.size() &&
           net.branches[next_branch].attach_after == static_cast<std::int64_t>(i)) {
      const BranchSpec& br = net.branches[next_branch];
      auto* bcaches = cache ? &cache->branches[next_branch] : nullptr;
      logits[next_branch] = run_branch(net, br, params, cur, mode, bcaches);
      ++next_branch;
    }
  }
  logits[static_cast<std::size_t>(n_exits) - 1] = cur;

  if (cache) cache->logits = logits;
  return logits;
}

void validate_exit_weights(const NetworkSpec& net, const ExitWeights& weights) {
  if (static_cast<std::int64_t>(weights.w.size()) != net.num_exits()) {
    throw ValidationError("exit weights: expected " + std::to_string(net.num_exits()) +
                          " entries, got " + std::to_string(weights.w.size()));
  }
  double total = 0.0;
  for (double w : weights.w) {
    if (!(w >= 0.0)) throw ValidationError("exit weights: entries must be >= 0");
    total += w;
  }
  if (total <= 0.0) throw ValidationError("exit weights: at least one entry must be > 0");
}

template <typename T>
double joint_loss(const std::vector<TensorT<T>>& logits, const TensorT<T>& onehot,
                  const ExitWeights& weights) {
  if (logits.size() != weights.w.size()) {
    throw ValidationError("joint_loss: " + std::to_string(logits.size()) + " exits vs " +
                          std::to_string(weights.w.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < logits.size(); ++n) {
    if (weights.w[n] == 0.0) continue;
    total += weights.w[n] * cross_entropy(softmax(logits[n]), onehot).loss;
  }
  return total;
}

template <typename T>
double backward_joint(const NetworkSpec& net, ParameterStoreT<T>& params, NetworkCache<T>& cache,
                      const TensorT<T>& onehot, const ExitWeights& weights) {
  validate_exit_weights(net, weights);
  if (cache.logits.size() != static_cast<std::size_t>(net.num_exits())) {
    throw StateError("backward_joint: cache does not hold a train-mode forward pass");
  }

  double total_loss = 0.0;
  // Per-exit logit gradients, scaled by the exit weight.
  std::vector<TensorT<T>> grad_logits(cache.logits.size());
  for (std::size_t n = 0; n < cache.logits.size(); ++n) {
    if (weights.w[n] == 0.0) continue;
    LossGrad<T> lg = cross_entropy(softmax(cache.logits[n]), onehot);
    total_loss += weights.w[n] * lg.loss;
    const T w = static_cast<T>(weights.w[n]);
    for (std::int64_t i = 0; i < lg.grad_logits.size(); ++i) lg.grad_logits[i] *= w;
    grad_logits[n] = std::move(lg.grad_logits);
  }

  // Branches first: gradient of each branch's loss at its attach activation.
  std::vector<TensorT<T>> branch_attach_grads(net.branches.size());
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    if (weights.w[b] == 0.0) continue;
    const BranchSpec& br = net.branches[b];
    TensorT<T> g = std::move(grad_logits[b]);
    for (std::int64_t j = static_cast<std::int64_t>(br.layers.size()) - 1; j >= 0; --j) {
      auto ref = layer_params_ref(params, branch_param_prefix(br.exit_index, j));
      g = layer_backward(br.layers[static_cast<std::size_t>(j)], ref,
                         cache.branches[b][static_cast<std::size_t>(j)], g);
    }
    branch_attach_grads[b] = std::move(g);
  }

  // Trunk, deepest layer first, merging branch contributions at their attach
  // points so shared-prefix parameters accumulate every downstream exit.
  TensorT<T> g;
  const std::size_t head_exit = static_cast<std::size_t>(net.num_exits()) - 1;
  bool have_grad = false;
  if (weights.w[head_exit] != 0.0) {
    g = std::move(grad_logits[head_exit]);
    have_grad = true;
  }
  for (std::int64_t i = static_cast<std::int64_t>(net.trunk.size()) - 1; i >= 0; --i) {
    if (have_grad) {
      auto ref = layer_params_ref(params, trunk_param_prefix(i));
      g = layer_backward(net.trunk[static_cast<std::size_t>(i)], ref,
                         cache.trunk[static_cast<std::size_t>(i)], g);
    }
    if (i == 0) break;
    // g now holds the gradient at the output of trunk layer i-1.
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
      if (net.branches[b].attach_after != i - 1 || weights.w[b] == 0.0) continue;
      if (!have_grad) {
        g = std::move(branch_attach_grads[b]);
        have_grad = true;
      } else {
        const TensorT<T>& bg = branch_attach_grads[b];
        for (std::int64_t k = 0; k < g.size(); ++k) g[k] += bg[k];
      }
    }
  }
  return total_loss;
}

#define BRANCHY_INSTANTIATE(T)                                                                   \
  template ParameterStoreT<T> init_params<T>(const NetworkSpec&, Rng&);                          \
  template std::vector<TensorT<T>> forward_all_exits<T>(                                        \
      const NetworkSpec&, const ParameterStoreT<T>&, const TensorT<T>&, Mode,                    \
      NetworkCache<T>*);                                                                         \
  template double joint_loss<T>(const std::vector<TensorT<T>>&, const TensorT<T>&,               \
                                const ExitWeights&);                                             \
  template double backward_joint<T>(const NetworkSpec&, ParameterStoreT<T>&, NetworkCache<T>&,   \
                                    const TensorT<T>&, const ExitWeights&);

BRANCHY_INSTANTIATE(float)
BRANCHY_INSTANTIATE(double)
#undef BRANCHY_INSTANTIATE

}  // namespace branchy
