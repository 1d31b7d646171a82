// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "cvrm/common/error.hpp"
#include "cvrm/common/random.hpp"
#include "cvrm/data/split.hpp"

namespace cvrm::eval {

struct Fold {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> val;    // ascending
};

/// Held-out test indices plus k train/validation folds over the remaining
/// pool. All indices refer to the original corpus.
struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 42;
  std::vector<std::size_t> test;
  std::vector<Fold> folds;
};

/// Stratified k-fold over positions 0..labels.size()-1: each class is
/// shuffled with the seed and dealt round-robin into k folds.
inline std::vector<Fold> stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2, got " + std::to_string(k));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
  for (auto& [label, idx] : by_class) {
    if (idx.size() < static_cast<std::size_t>(k))
      throw ValidationError("label", "class " + std::to_string(label) + " has " +
                                         std::to_string(idx.size()) + " members, fewer than k=" +
                                         std::to_string(k));
    Rng rng(derive_seed(seed, "kfold", static_cast<std::uint64_t>(label)));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) members[i % static_cast<std::size_t>(k)].push_back(idx[i]);
  }
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t f = 0; f < folds.size(); ++f) {
    folds[f].val = members[f];
    std::sort(folds[f].val.begin(), folds[f].val.end());
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), members[g].begin(), members[g].end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

/// Test split first, then stratified k-fold on the rest.
inline FoldPlan make_fold_plan(const std::vector<int>& labels, double test_fraction, int k,
                               std::uint64_t seed) {
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  const auto split = data::split_train_test(labels, test_fraction, seed);
  plan.test = split.test;
  const auto pool_labels = data::take(labels, split.train);
  for (auto fold : stratified_kfold(pool_labels, k, seed)) {
    for (auto& i : fold.train) i = split.train[i];
    for (auto& i : fold.val) i = split.train[i];
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

}  // namespace cvrm::eval
