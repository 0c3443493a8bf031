#pragma once

#include <cmath>
#include <span>

#include "gidropout/nn/tensor.hpp"

namespace gidropout::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; `step` counts from 1.
inline void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg, std::size_t step) {
  if (step < 1) throw ConfigError("adam_step: step must be >= 1");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Parameter* p : params) {
    auto w = p->value.values();
    auto g = p->grad.values();
    auto m = p->adam_m.values();
    auto v = p->adam_v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace gidropout::nn
