#pragma once

#include <cstdint>
#include <vector>

#include "branchy/layers.hpp"

namespace branchy {

struct AdamConfig {
  double alpha = 0.001;  // step size
  double beta1 = 0.99;   // first-moment decay
  double beta2 = 0.999;  // second-moment decay
  double epsilon = 1e-8;
};

void validate_adam_config(const AdamConfig& cfg);

// Adam with bias-corrected moment estimates. One instance owns the moment
// buffers for a specific parameter store layout; step() consumes the
// accumulated gradients and zeroes them.
template <typename T>
class AdamT {
 public:
  AdamT(const ParameterStoreT<T>& params, AdamConfig cfg);

  //   t <- t + 1
  //   m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
  //   theta <- theta - alpha * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
  void step(ParameterStoreT<T>& params);

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

using Adam = AdamT<float>;

}  // namespace branchy
