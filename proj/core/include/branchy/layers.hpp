#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "branchy/kernels.hpp"
#include "branchy/rng.hpp"
#include "branchy/tensor.hpp"

namespace branchy {

// ---------------------------------------------------------------------------
// Layer descriptions

struct ConvSpec {
  std::int64_t channels = 0;  // output channels
  std::int64_t kernel = 0;    // square kernel extent
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  bool operator==(const ConvSpec&) const = default;
};

struct DenseSpec {
  std::int64_t features = 0;  // output features
  bool operator==(const DenseSpec&) const = default;
};

struct ReluSpec {
  bool operator==(const ReluSpec&) const = default;
};

struct MaxPoolSpec {
  std::int64_t window = 0;
  std::int64_t stride = 0;
  bool operator==(const MaxPoolSpec&) const = default;
};

struct FlattenSpec {
  bool operator==(const FlattenSpec&) const = default;
};

using LayerSpec = std::variant<ConvSpec, DenseSpec, ReluSpec, MaxPoolSpec, FlattenSpec>;

// Short lowercase name of the layer kind ("conv", "dense", ...).
const char* layer_kind_name(const LayerSpec& spec);

// Throws ValidationError when hyperparameters are invalid for the kind.
void validate_layer(const LayerSpec& spec);

// Shape a layer produces for the given input shape; validates compatibility.
Shape infer_layer_shape(const LayerSpec& spec, const Shape& input);

// Multiply-accumulate count of one forward evaluation at the given input
// shape. Conv and dense contribute; relu/pool/flatten count as zero.
std::int64_t layer_macs(const LayerSpec& spec, const Shape& input);

bool layer_has_params(const LayerSpec& spec);

// ---------------------------------------------------------------------------
// Parameters

// Ordered collection of named parameter tensors with matching gradient
// buffers. Iteration order is insertion order and stable across runs.
template <typename T>
class ParameterStoreT {
 public:
  struct Entry {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;
  };

  std::int64_t add(std::string name, TensorT<T> value) {
    if (by_name_.count(name)) {
      throw ValidationError("duplicate parameter name: " + name);
    }
    TensorT<T> grad(value.shape());
    by_name_.emplace(name, static_cast<std::int64_t>(entries_.size()));
    entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
    return static_cast<std::int64_t>(entries_.size()) - 1;
  }

  std::int64_t index_of(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? -1 : it->second;
  }

  Entry& entry(std::int64_t i) { return entries_[static_cast<std::size_t>(i)]; }
  const Entry& entry(std::int64_t i) const { return entries_[static_cast<std::size_t>(i)]; }

  std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(T(0));
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::int64_t> by_name_;
};

using ParameterStore = ParameterStoreT<float>;

// View of one layer's parameters inside a store. Null for layers without
// parameters; gradient views are null when the store is const (forward-only).
template <typename T>
struct LayerParamsRef {
  const TensorT<T>* weight = nullptr;
  const TensorT<T>* bias = nullptr;
  TensorT<T>* weight_grad = nullptr;
  TensorT<T>* bias_grad = nullptr;
};

// Creates weight/bias entries for a layer under `prefix` ("trunk.0", ...).
// Weights draw from U(-b, b) with b = sqrt(6 / fan_in); biases start at zero.
template <typename T>
void init_layer_params(const LayerSpec& spec, const Shape& input, const std::string& prefix,
                       ParameterStoreT<T>& store, Rng& rng);

template <typename T>
LayerParamsRef<T> layer_params_ref(ParameterStoreT<T>& store, const std::string& prefix);

template <typename T>
LayerParamsRef<T> layer_params_ref(const ParameterStoreT<T>& store, const std::string& prefix);

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { Train, Infer };

// Values saved by a training-mode forward pass for the matching backward.
template <typename T>
struct LayerCache {
  bool valid = false;
  TensorT<T> input;
  std::vector<std::int64_t> pool_argmax;
};

// Runs one layer. In Train mode `cache` must be non-null and is populated.
template <typename T>
TensorT<T> layer_forward(const LayerSpec& spec, const LayerParamsRef<T>& params,
                         const TensorT<T>& input, Mode mode, LayerCache<T>* cache);

// Gradient w.r.t. the layer input; parameter gradients are accumulated (+=)
// into the store, which is what lets several exits share one trunk.
template <typename T>
TensorT<T> layer_backward(const LayerSpec& spec, const LayerParamsRef<T>& params,
                          const LayerCache<T>& cache, const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// Classifier head

// Row-wise softmax with max-subtraction; rows sum to 1.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits);

template <typename T>
struct LossGrad {
  double loss = 0.0;
  TensorT<T> grad_logits;  // d loss / d logits, batch-mean already applied
};

// Cross entropy normalized by the class count: mean over the batch of
// -(1/C) * log p_true, with probabilities clamped to [1e-12, 1] before the
// log. grad_logits = (p - y) / (C * N).
template <typename T>
LossGrad<T> cross_entropy(const TensorT<T>& probs, const TensorT<T>& onehot);

// Probability floor applied before every log().
inline constexpr double kProbClamp = 1e-12;

}  // namespace branchy
