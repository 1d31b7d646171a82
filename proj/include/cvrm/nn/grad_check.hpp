// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "cvrm/common/random.hpp"
#include "cvrm/nn/tensor.hpp"

namespace cvrm::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Gradient magnitudes below this are compared on an absolute scale.
inline constexpr double kGradScaleFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(kGradScaleFloor, std::abs(analytic) + std::abs(numeric));
}

/// Compares `analytic` against central differences of `loss()` on up to
/// `per_param` randomly chosen coordinates of every trainable parameter
/// (all coordinates when the parameter is smaller). `loss` must be a pure
/// function of the parameter values.
template <typename LossFn>
GradCheckResult grad_check(ParameterSet<double>& params, LossFn&& loss,
                           const GradBuffer<double>& analytic, double epsilon = 1e-5,
                           std::size_t per_param = 16, std::uint64_t seed = 7) {
  GradCheckResult res;
  Rng rng(seed);
  for (auto& p : params) {
    if (!p.trainable) continue;
    const auto size = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    if (size > per_param) {
      rng.shuffle(coords);
      coords.resize(per_param);
    }
    for (auto c : coords) {
      double& x = p.value.data()[c];
      const double saved = x;
      x = saved + epsilon;
      const double up = loss();
      x = saved - epsilon;
      const double down = loss();
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("non-finite loss during gradient check of " + p.name);
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[p.slot].data()[c];
      if (!std::isfinite(a)) throw NumericError("non-finite analytic gradient in " + p.name);
      const double err = relative_error(a, numeric);
      ++res.coordinates_checked;
      if (err > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        res.worst_param = p.name;
        res.worst_index = static_cast<Eigen::Index>(c);
        res.analytic_at_worst = a;
        res.numeric_at_worst = numeric;
      }
    }
  }
  return res;
}

}  // namespace cvrm::nn
