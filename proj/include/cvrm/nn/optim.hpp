// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "cvrm/nn/tensor.hpp"

namespace cvrm::nn {

struct AmsgradConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AmsgradState {
  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  std::vector<Matrix<T>> v_hat_max;
  std::size_t step_count = 0;
};

/// One AMSGrad step with bias correction and decoupled weight decay.
/// Non-trainable parameters are skipped.
template <typename T>
void amsgrad_step(ParameterSet<T>& params, const GradBuffer<T>& grads, AmsgradState<T>& state,
                  const AmsgradConfig& cfg) {
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ConfigError("AMSGrad betas must be in [0, 1)");
  if (grads.grads.size() != params.size()) throw ShapeError("gradient buffer size mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      state.v.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      state.v_hat_max.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  for (const auto& p : params)
    if (p.trainable) {
      require_shape(grads[p.slot].rows() == p.value.rows() && grads[p.slot].cols() == p.value.cols(),
                    "gradient shape mismatch for " + p.name);
      require_finite(grads[p.slot], "gradient of " + p.name);
    }

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const auto b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const auto bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const auto bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const auto lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  const auto decay = static_cast<T>(cfg.lr * cfg.weight_decay);

  for (auto& p : params) {
    if (!p.trainable) continue;
    const auto& g = grads[p.slot];
    auto& m = state.m[p.slot];
    auto& v = state.v[p.slot];
    auto& vmax = state.v_hat_max[p.slot];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    vmax = vmax.cwiseMax(v / bc2);
    if (decay != T(0)) p.value -= decay * p.value;
    p.value.array() -= lr * (m.array() / bc1) / (vmax.array().sqrt() + eps);
  }
}

}  // namespace cvrm::nn
