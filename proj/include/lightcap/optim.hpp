#pragma once

#include <cmath>

#include "lightcap/tensor.hpp"

namespace lightcap {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update. The gradient buffer is zeroed afterwards.
template <typename T>
void adam_step(Parameter<T>& p, const AdamConfig& cfg) {
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto value = p.value.flat();
  auto grad = p.grad.flat();
  auto m = p.adam_m.flat();
  auto v = p.adam_v.flat();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
    value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
    grad[i] = T{0};
  }
}

template <typename T>
void adam_step(ParameterSet<T>& params, const AdamConfig& cfg) {
  for (auto& p : params) {
    adam_step(*p, cfg);
  }
}

} // namespace lightcap
