// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cvrm/common/random.hpp"
#include "cvrm/eval/metrics.hpp"
#include "cvrm/nn/layers.hpp"
#include "cvrm/nn/optim.hpp"
#include "cvrm/tokenizer/bpe.hpp"

namespace cvrm::eval {

struct TrainingConfig {
  int epochs = 30;
  int batch_size = 12;
  double lr = 3e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool class_weighting = true;
  int k_folds = 5;
  double test_size = 0.2;
  std::uint64_t seed = 42;
  int threads = 1;
  /// Number of folds to train (0 = all k).
  int max_folds = 0;
  int eval_batch = 64;

  nn::AmsgradConfig optimizer() const { return {lr, beta1, beta2, eps, weight_decay}; }

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (k_folds < 2) throw ConfigError("k_folds must be >= 2");
    if (!(test_size > 0.0 && test_size < 1.0)) throw ConfigError("test_size must be in (0, 1)");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (max_folds < 0 || max_folds > k_folds) throw ConfigError("max_folds must be in [0, k_folds]");
    if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
  }
};

/// Inputs of one split for the neural model families.
template <typename T>
struct Batch {
  std::vector<const tok::TokenSequence*> seqs;
  nn::Matrix<T> extra;  // (n, extra_dim) or empty
  std::vector<int> labels;

  std::size_t size() const { return seqs.size(); }

  Batch slice(std::span<const std::size_t> idx) const {
    Batch b;
    for (auto i : idx) {
      b.seqs.push_back(seqs[i]);
      b.labels.push_back(labels[i]);
    }
    if (extra.size() > 0) {
      b.extra.resize(static_cast<Eigen::Index>(idx.size()), extra.cols());
      for (std::size_t r = 0; r < idx.size(); ++r)
        b.extra.row(static_cast<Eigen::Index>(r)) = extra.row(static_cast<Eigen::Index>(idx[r]));
    }
    return b;
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double seconds = 0.0;
};

inline nlohmann::ordered_json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val_f1}, {"seconds", e.seconds}};
}

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 = initial weights
  double best_val_f1 = 0.0;
};

/// Eval-mode predictions in chunks of `chunk` samples.
template <typename Model, typename T>
std::vector<int> predict_all(const Model& model, const Batch<T>& data, std::size_t chunk,
                             std::size_t threads) {
  std::vector<int> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < data.size(); b += chunk) {
    idx.clear();
    for (std::size_t i = b; i < std::min(data.size(), b + chunk); ++i) idx.push_back(i);
    const Batch<T> part = data.slice(idx);
    const auto p = model.predict(part.seqs, part.extra, threads);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

/// Splits a shuffled index list into batches; a trailing batch of one sample
/// is merged into its predecessor so batch statistics stay defined.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                          std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < order.size(); b += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + batch_size)));
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

/// Runs exactly cfg.epochs epochs of AMSGrad on weighted cross-entropy,
/// scores the validation split after each epoch, and leaves the model at
/// the epoch with the best validation F1 (earliest on ties).
template <typename Model, typename T>
TrainResult train_model(Model& model, const Batch<T>& train, const Batch<T>& val,
                        const TrainingConfig& cfg, std::uint64_t seed,
                        const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  TrainResult res;
  if (cfg.epochs == 0) return res;
  if (train.size() < 2) throw ConfigError("training split needs at least 2 samples");
  const std::vector<double> weights =
      cfg.class_weighting ? nn::balanced_class_weights(train.labels) : std::vector<double>{1.0, 1.0};
  auto& params = model.params();
  nn::AmsgradState<T> opt;
  auto grads = params.make_grads();
  std::vector<nn::Matrix<T>> best;
  res.best_val_f1 = -1.0;
  std::uint64_t step = 0;
  const auto threads = static_cast<std::size_t>(cfg.threads);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "train.shuffle", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (const auto& idx : make_batches(order, static_cast<std::size_t>(cfg.batch_size))) {
      const Batch<T> b = train.slice(idx);
      grads.set_zero();
      const T loss = model.loss_and_grad(b.seqs, b.extra, b.labels, weights,
                                         derive_seed(seed, "train.dropout", step++), grads, threads);
      if (!std::isfinite(static_cast<double>(loss)))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + " (lr " + std::to_string(cfg.lr) + ")");
      nn::amsgrad_step(params, grads, opt, cfg.optimizer());
      loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(train.size());
    if (val.size() > 0) {
      const auto pred = predict_all(model, val, static_cast<std::size_t>(cfg.eval_batch), threads);
      e.val_f1 = compute_metrics(pred, val.labels).f1;
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(e);
    if (on_epoch) on_epoch(e);
    if (e.val_f1 > res.best_val_f1) {
      res.best_val_f1 = e.val_f1;
      res.best_epoch = epoch;
      best = params.snapshot();
    }
  }
  params.restore(best);
  return res;
}

}  // namespace cvrm::eval
