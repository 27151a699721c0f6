#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "branchy/layers.hpp"

namespace branchy {

// A side branch: a stack of layers fed from the output of trunk layer
// `attach_after`, ending in a dense layer that produces class logits.
struct BranchSpec {
  std::int64_t attach_after = 0;  // 0-based trunk layer index
  std::vector<LayerSpec> layers;
  std::int64_t exit_index = 0;  // 1-based; branches are numbered from shallowest
  bool operator==(const BranchSpec&) const = default;
};

// A sequential trunk with numbered side branches. Exit n for n < N is branch
// n; exit N is the trunk's own head.
struct NetworkSpec {
  std::int64_t in_channels = 0;
  std::int64_t in_height = 0;
  std::int64_t in_width = 0;
  std::int64_t num_classes = 0;
  std::vector<LayerSpec> trunk;
  std::vector<BranchSpec> branches;

  std::int64_t num_exits() const { return static_cast<std::int64_t>(branches.size()) + 1; }
  Shape input_shape(std::int64_t batch = 1) const {
    return Shape{batch, in_channels, in_height, in_width};
  }
  bool operator==(const NetworkSpec&) const = default;
};

// Weight of each exit's loss term in the joint objective.
struct ExitWeights {
  std::vector<double> w;
};

// Structural validation plus a symbolic forward pass over every layer:
// branch attach points must be strictly increasing and inside the trunk,
// every exit must end in num_classes logits, shapes must chain.
void validate_network(const NetworkSpec& net);

// Output shape of every layer for a given batch size.
struct NetworkShapes {
  std::vector<Shape> trunk;                 // output of trunk layer i
  std::vector<std::vector<Shape>> branches; // output of branch b, layer j
};
NetworkShapes infer_network_shapes(const NetworkSpec& net, std::int64_t batch = 1);

// Fresh parameter store for the whole network, trunk entries first and then
// branches in exit order. Names are "trunk.<i>.<weight|bias>" and
// "branch<n>.<j>.<weight|bias>".
template <typename T>
ParameterStoreT<T> init_params(const NetworkSpec& net, Rng& rng);

std::string trunk_param_prefix(std::int64_t layer);
std::string branch_param_prefix(std::int64_t exit_index, std::int64_t layer);

// Saved activations of one training-mode forward pass over the whole net.
template <typename T>
struct NetworkCache {
  std::vector<LayerCache<T>> trunk;
  std::vector<std::vector<LayerCache<T>>> branches;
  std::vector<TensorT<T>> logits;  // per exit, 1..N in order
};

// Runs the trunk once and every branch off its attach activation; returns the
// logits of all N exits in exit order. Each trunk segment is computed exactly
// once per call.
template <typename T>
std::vector<TensorT<T>> forward_all_exits(const NetworkSpec& net,
                                          const ParameterStoreT<T>& params, const TensorT<T>& x,
                                          Mode mode, NetworkCache<T>* cache);

// Validates weights against the network: length N, no negative entries, at
// least one positive entry.
void validate_exit_weights(const NetworkSpec& net, const ExitWeights& weights);

// Joint objective: sum over exits of w_n * cross_entropy(softmax(logits_n)).
template <typename T>
double joint_loss(const std::vector<TensorT<T>>& logits, const TensorT<T>& onehot,
                  const ExitWeights& weights);

// Backpropagates the joint loss. Trunk-prefix parameters accumulate
// gradients from every exit downstream of them; branch parameters only from
// their own exit. Returns the joint loss value.
template <typename T>
double backward_joint(const NetworkSpec& net, ParameterStoreT<T>& params, NetworkCache<T>& cache,
                      const TensorT<T>& onehot, const ExitWeights& weights);

}  // namespace branchy
