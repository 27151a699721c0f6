#include "branchy/adam.hpp"

#include <cmath>

namespace branchy {

void validate_adam_config(const AdamConfig& cfg) {
  // alpha == 0 is tolerated as an explicit no-op optimizer.
  if (!(cfg.alpha >= 0.0)) throw ValidationError("adam: alpha must be >= 0");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0)) throw ValidationError("adam: beta1 must be in (0,1)");
  if (!(cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) throw ValidationError("adam: beta2 must be in (0,1)");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("adam: epsilon must be > 0");
}

template <typename T>
AdamT<T>::AdamT(const ParameterStoreT<T>& params, AdamConfig cfg) : cfg_(cfg) {
  validate_adam_config(cfg_);
  m_.reserve(static_cast<std::size_t>(params.size()));
  v_.reserve(static_cast<std::size_t>(params.size()));
  for (const auto& e : params) {
    m_.emplace_back(static_cast<std::size_t>(e.value.size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(e.value.size()), 0.0);
  }
}

template <typename T>
void AdamT<T>::step(ParameterStoreT<T>& params) {
  if (static_cast<std::size_t>(params.size()) != m_.size()) {
    throw StateError("adam: parameter store layout changed under the optimizer");
  }
  ++t_;
  const double corr1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::int64_t p = 0; p < params.size(); ++p) {
    auto& entry = params.entry(p);
    double* m = m_[static_cast<std::size_t>(p)].data();
    double* v = v_[static_cast<std::size_t>(p)].data();
    for (std::int64_t i = 0; i < entry.value.size(); ++i) {
      const double g = static_cast<double>(entry.grad[i]);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / corr1;
      const double v_hat = v[i] / corr2;
      entry.value[i] = static_cast<T>(static_cast<double>(entry.value[i]) -
                                      cfg_.alpha * m_hat / (std::sqrt(v_hat) + cfg_.epsilon));
    }
    entry.grad.fill(T(0));
  }
}

template class AdamT<float>;
template class AdamT<double>;

}  // namespace branchy
