#include "branchy/layers.hpp"

#include <algorithm>
#include <cmath>

namespace branchy {

namespace {

template <class... Ts>
struct Overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;

}  // namespace

const char* layer_kind_name(const LayerSpec& spec) {
  return std::visit(Overload{[](const ConvSpec&) { return "conv"; },
                             [](const DenseSpec&) { return "dense"; },
                             [](const ReluSpec&) { return "relu"; },
                             [](const MaxPoolSpec&) { return "maxpool"; },
                             [](const FlattenSpec&) { return "flatten"; }},
                    spec);
}

void validate_layer(const LayerSpec& spec) {
  std::visit(Overload{[](const ConvSpec& c) {
                        if (c.channels < 1) throw ValidationError("conv: channels must be >= 1");
                        if (c.kernel < 1) throw ValidationError("conv: kernel must be >= 1");
                        if (c.stride < 1) throw ValidationError("conv: stride must be >= 1");
                        if (c.pad < 0) throw ValidationError("conv: pad must be >= 0");
                      },
                      [](const DenseSpec& d) {
                        if (d.features < 1) throw ValidationError("dense: features must be >= 1");
                      },
                      [](const ReluSpec&) {},
                      [](const MaxPoolSpec& p) {
                        if (p.window < 1) throw ValidationError("maxpool: window must be >= 1");
                        if (p.stride < 1) throw ValidationError("maxpool: stride must be >= 1");
                      },
                      [](const FlattenSpec&) {}},
             spec);
}

Shape infer_layer_shape(const LayerSpec& spec, const Shape& input) {
  return std::visit(
      Overload{
          [&](const ConvSpec& c) {
            if (input.rank() != 4) {
              throw DimensionError("conv expects a rank-4 input, got " + input.str());
            }
            const std::int64_t hout =
                sliding_extent(input.extent(2), c.kernel, c.stride, c.pad, "conv");
            const std::int64_t wout =
                sliding_extent(input.extent(3), c.kernel, c.stride, c.pad, "conv");
            return Shape{input.extent(0), c.channels, hout, wout};
          },
          [&](const DenseSpec& d) {
            if (input.rank() != 2) {
              throw DimensionError("dense expects a rank-2 input, got " + input.str() +
                                   " (flatten first)");
            }
            return Shape{input.extent(0), d.features};
          },
          [&](const ReluSpec&) { return input; },
          [&](const MaxPoolSpec& p) {
            if (input.rank() != 4) {
              throw DimensionError("maxpool expects a rank-4 input, got " + input.str());
            }
            const std::int64_t hout =
                sliding_extent(input.extent(2), p.window, p.stride, 0, "maxpool");
            const std::int64_t wout =
                sliding_extent(input.extent(3), p.window, p.stride, 0, "maxpool");
            return Shape{input.extent(0), input.extent(1), hout, wout};
          },
          [&](const FlattenSpec&) {
            std::int64_t features = 1;
            for (std::int64_t i = 1; i < input.rank(); ++i) features *= input.extent(i);
            return Shape{input.extent(0), features};
          }},
      spec);
}

std::int64_t layer_macs(const LayerSpec& spec, const Shape& input) {
  const Shape out = infer_layer_shape(spec, input);
  return std::visit(
      Overload{[&](const ConvSpec& c) {
                 // per output cell: Cin * kh * kw multiply-accumulates
                 return out.extent(2) * out.extent(3) * c.channels * input.extent(1) * c.kernel *
                        c.kernel;
               },
               [&](const DenseSpec& d) { return input.extent(1) * d.features; },
               [&](const auto&) { return std::int64_t{0}; }},
      spec);
}

bool layer_has_params(const LayerSpec& spec) {
  return std::holds_alternative<ConvSpec>(spec) || std::holds_alternative<DenseSpec>(spec);
}

template <typename T>
void init_layer_params(const LayerSpec& spec, const Shape& input, const std::string& prefix,
                       ParameterStoreT<T>& store, Rng& rng) {
  if (!layer_has_params(spec)) return;
  Shape wshape, bshape;
  std::int64_t fan_in = 0;
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    wshape = Shape{c->channels, input.extent(1), c->kernel, c->kernel};
    bshape = Shape{c->channels};
    fan_in = input.extent(1) * c->kernel * c->kernel;
  } else {
    const auto& d = std::get<DenseSpec>(spec);
    wshape = Shape{input.extent(1), d.features};
    bshape = Shape{d.features};
    fan_in = input.extent(1);
  }
  TensorT<T> weight(wshape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < weight.size(); ++i) {
    weight[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  store.add(prefix + ".weight", std::move(weight));
  store.add(prefix + ".bias", TensorT<T>(bshape));
}

template <typename T>
LayerParamsRef<T> layer_params_ref(ParameterStoreT<T>& store, const std::string& prefix) {
  LayerParamsRef<T> ref;
  const std::int64_t wi = store.index_of(prefix + ".weight");
  if (wi >= 0) {
    ref.weight = &store.entry(wi).value;
    ref.weight_grad = &store.entry(wi).grad;
    const std::int64_t bi = store.index_of(prefix + ".bias");
    ref.bias = &store.entry(bi).value;
    ref.bias_grad = &store.entry(bi).grad;
  }
  return ref;
}

template <typename T>
LayerParamsRef<T> layer_params_ref(const ParameterStoreT<T>& store, const std::string& prefix) {
  LayerParamsRef<T> ref;
  const std::int64_t wi = store.index_of(prefix + ".weight");
  if (wi >= 0) {
    ref.weight = &store.entry(wi).value;
    const std::int64_t bi = store.index_of(prefix + ".bias");
    ref.bias = &store.entry(bi).value;
  }
  return ref;
}

template <typename T>
TensorT<T> layer_forward(const LayerSpec& spec, const LayerParamsRef<T>& params,
                         const TensorT<T>& input, Mode mode, LayerCache<T>* cache) {
  if (mode == Mode::Train && cache == nullptr) {
    throw StateError("layer_forward: train mode requires a cache");
  }
  TensorT<T> out = std::visit(
      Overload{
          [&](const ConvSpec& c) {
            return conv2d(input, *params.weight, *params.bias, c.stride, c.pad);
          },
          [&](const DenseSpec&) {
            if (input.shape().rank() != 2) {
              throw DimensionError("dense expects a rank-2 input, got " + input.shape().str());
            }
            if (input.shape().extent(1) != params.weight->shape().extent(0)) {
              throw DimensionError("dense: input features " + input.shape().str() +
                                   " do not match weight " + params.weight->shape().str());
            }
            TensorT<T> y = matmul(input, *params.weight);
            const std::int64_t n = y.shape().extent(0);
            const std::int64_t f = y.shape().extent(1);
            for (std::int64_t i = 0; i < n; ++i) {
              for (std::int64_t j = 0; j < f; ++j) y.at(i, j) += (*params.bias)[j];
            }
            return y;
          },
          [&](const ReluSpec&) {
            TensorT<T> y(input.shape());
            for (std::int64_t i = 0; i < input.size(); ++i) y[i] = std::max(input[i], T(0));
            return y;
          },
          [&](const MaxPoolSpec& p) {
            auto res = maxpool2d(input, p.window, p.stride);
            if (cache) cache->pool_argmax = std::move(res.argmax);
            return std::move(res.output);
          },
          [&](const FlattenSpec&) {
            return input.reshaped(infer_layer_shape(spec, input.shape()));
          }},
      spec);
  if (mode == Mode::Train) {
    cache->input = input;
    cache->valid = true;
  }
  return out;
}

template <typename T>
TensorT<T> layer_backward(const LayerSpec& spec, const LayerParamsRef<T>& params,
                          const LayerCache<T>& cache, const TensorT<T>& grad_out) {
  if (!cache.valid) {
    throw StateError(std::string("layer_backward(") + layer_kind_name(spec) +
                     "): no forward cache; run forward in train mode first");
  }
  return std::visit(
      Overload{
          [&](const ConvSpec& c) {
            return conv2d_backward(cache.input, *params.weight, grad_out, c.stride, c.pad,
                                   *params.weight_grad, *params.bias_grad);
          },
          [&](const DenseSpec&) {
            const TensorT<T>& x = cache.input;
            const std::int64_t n = x.shape().extent(0);
            const std::int64_t fin = x.shape().extent(1);
            const std::int64_t fout = grad_out.shape().extent(1);

            // dW += X^T dY
            std::vector<T> xt(static_cast<std::size_t>(n * fin));
            transpose(n, fin, x.data(), xt.data());
            gemm(fin, fout, n, xt.data(), grad_out.data(), params.weight_grad->data(), true);

            // db += column sums of dY
            for (std::int64_t j = 0; j < fout; ++j) {
              double sum = 0.0;
              for (std::int64_t i = 0; i < n; ++i) {
                sum += static_cast<double>(grad_out.at(i, j));
              }
              (*params.bias_grad)[j] += static_cast<T>(sum);
            }

            // dX = dY W^T
            std::vector<T> wt(static_cast<std::size_t>(fin * fout));
            transpose(fin, fout, params.weight->data(), wt.data());
            TensorT<T> grad_in(x.shape());
            gemm(n, fin, fout, grad_out.data(), wt.data(), grad_in.data(), false);
            return grad_in;
          },
          [&](const ReluSpec&) {
            TensorT<T> grad_in(cache.input.shape());
            for (std::int64_t i = 0; i < grad_in.size(); ++i) {
              grad_in[i] = cache.input[i] > T(0) ? grad_out[i] : T(0);
            }
            return grad_in;
          },
          [&](const MaxPoolSpec&) {
            return maxpool2d_backward(cache.input.shape(), cache.pool_argmax, grad_out);
          },
          [&](const FlattenSpec&) { return grad_out.reshaped(cache.input.shape()); }},
      spec);
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  if (logits.shape().rank() != 2) {
    throw DimensionError("softmax expects [batch, classes], got " + logits.shape().str());
  }
  const std::int64_t n = logits.shape().extent(0);
  const std::int64_t c = logits.shape().extent(1);
  TensorT<T> probs(logits.shape());
  std::vector<double> row(static_cast<std::size_t>(c));
  for (std::int64_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < c; ++j) {
      mx = std::max(mx, static_cast<double>(logits.at(i, j)));
    }
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      row[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(logits.at(i, j)) - mx);
      sum += row[static_cast<std::size_t>(j)];
    }
    for (std::int64_t j = 0; j < c; ++j) {
      probs.at(i, j) = static_cast<T>(row[static_cast<std::size_t>(j)] / sum);
    }
  }
  return probs;
}

template <typename T>
LossGrad<T> cross_entropy(const TensorT<T>& probs, const TensorT<T>& onehot) {
  if (probs.shape() != onehot.shape()) {
    throw DimensionError("cross_entropy: probs " + probs.shape().str() + " vs labels " +
                         onehot.shape().str());
  }
  const std::int64_t n = probs.shape().extent(0);
  const std::int64_t c = probs.shape().extent(1);

  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t ones = 0;
    for (std::int64_t j = 0; j < c; ++j) {
      const T v = onehot.at(i, j);
      if (v == T(1)) {
        ++ones;
      } else if (v != T(0)) {
        throw ValidationError("cross_entropy: label row " + std::to_string(i) +
                              " is not one-hot");
      }
    }
    if (ones != 1) {
      throw ValidationError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
    }
  }

  LossGrad<T> result;
  result.grad_logits = TensorT<T>(probs.shape());
  const double scale = 1.0 / (static_cast<double>(c) * static_cast<double>(n));
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      const double p = static_cast<double>(probs.at(i, j));
      const double y = static_cast<double>(onehot.at(i, j));
      if (y == 1.0) {
        loss -= std::log(std::clamp(p, kProbClamp, 1.0));
      }
      result.grad_logits.at(i, j) = static_cast<T>((p - y) * scale);
    }
  }
  result.loss = loss / (static_cast<double>(c) * static_cast<double>(n));
  return result;
}

#define BRANCHY_INSTANTIATE(T)                                                                  \
  template class ParameterStoreT<T>;                                                           \
  template void init_layer_params<T>(const LayerSpec&, const Shape&, const std::string&,       \
                                     ParameterStoreT<T>&, Rng&);                               \
  template LayerParamsRef<T> layer_params_ref<T>(ParameterStoreT<T>&, const std::string&);     \
  template LayerParamsRef<T> layer_params_ref<T>(const ParameterStoreT<T>&,                    \
                                                 const std::string&);                          \
  template TensorT<T> layer_forward<T>(const LayerSpec&, const LayerParamsRef<T>&,             \
                                       const TensorT<T>&, Mode, LayerCache<T>*);               \
  template TensorT<T> layer_backward<T>(const LayerSpec&, const LayerParamsRef<T>&,            \
                                        const LayerCache<T>&, const TensorT<T>&);              \
  template TensorT<T> softmax<T>(const TensorT<T>&);                                           \
  template LossGrad<T> cross_entropy<T>(const TensorT<T>&, const TensorT<T>&);

BRANCHY_INSTANTIATE(float)
BRANCHY_INSTANTIATE(double)
#undef BRANCHY_INSTANTIATE

}  // namespace branchy
