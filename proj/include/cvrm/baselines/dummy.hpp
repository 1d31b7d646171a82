// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cvrm/common/error.hpp"
#include "cvrm/common/random.hpp"

namespace cvrm::baselines {

/// Stratified dummy classifier: each prediction is 1 with probability equal
/// to the positive prevalence of the training labels, independently.
inline std::vector<int> dummy_predict(std::span<const int> labels_train, std::size_t n_test,
                                      std::uint64_t seed) {
  if (labels_train.empty()) throw ConfigError("dummy classifier needs training labels");
  std::size_t pos = 0;
  for (int y : labels_train) pos += y == 1 ? 1 : 0;
  const double p = static_cast<double>(pos) / static_cast<double>(labels_train.size());
  Rng rng(derive_seed(seed, "dummy"));
  std::vector<int> out(n_test);
  for (auto& v : out) v = rng.bernoulli(p) ? 1 : 0;
  return out;
}

}  // namespace cvrm::baselines
