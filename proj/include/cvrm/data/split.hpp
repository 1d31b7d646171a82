// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "cvrm/common/error.hpp"
#include "cvrm/common/random.hpp"

namespace cvrm::data {

/// Index-based split; both lists ascending.
struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified hold-out split. Per class c, round(count_c * test_fraction)
/// members (chosen by a seeded shuffle) go to the test side.
inline TrainTestSplit split_train_test(const std::vector<int>& labels, double test_fraction,
                                       std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must be in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  TrainTestSplit split;
  for (auto& [label, members] : by_class) {
    if (members.size() < 2)
      throw ValidationError("label", "class " + std::to_string(label) +
                                         " has fewer than 2 members; cannot stratify");
    Rng rng(derive_seed(seed, "split.train_test", static_cast<std::uint64_t>(label)));
    rng.shuffle(members);
    const auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(members.size()) * test_fraction));
    split.test.insert(split.test.end(), members.begin(), members.begin() + n_test);
    split.train.insert(split.train.end(), members.begin() + n_test, members.end());
  }
  if (labels.size() > 0 && by_class.size() < 2)
    throw ValidationError("label", "only one class present; cannot stratify");
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

template <typename T>
std::vector<T> take(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items.at(i));
  return out;
}

}  // namespace cvrm::data
