// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"

namespace cvrm::eval {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Positive class is label 1.
inline ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("prediction/label count mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

inline constexpr std::array<const char*, 4> kMetricNames = {"precision", "recall", "f1", "mcc"};

inline double metric_value(const Metrics& m, std::size_t i) {
  switch (i) {
    case 0: return m.precision;
    case 1: return m.recall;
    case 2: return m.f1;
    default: return m.mcc;
  }
}

/// Precision, recall, F1 and Matthews correlation. A zero denominator makes
/// the metric 0.
inline Metrics compute_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  Metrics m;
  m.precision = c.tp + c.fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = c.tp + c.fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = 2 * c.tp + c.fp + c.fn > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = den > 0.0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
  return m;
}

inline Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  return compute_metrics(confusion(predictions, labels));
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and population standard deviation.
inline Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

/// Per-fold metrics and their mean (std) across folds.
struct MetricsReport {
  std::vector<ConfusionCounts> fold_counts;
  std::vector<Metrics> folds;
  std::array<Summary, 4> summary{};

  void add_fold(const ConfusionCounts& c) {
    fold_counts.push_back(c);
    folds.push_back(compute_metrics(c));
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> vals;
      for (const auto& f : folds) vals.push_back(metric_value(f, k));
      summary[k] = summarize(vals);
    }
  }

  bool empty() const { return folds.empty(); }
  const Summary& metric(const std::string& name) const {
    for (std::size_t k = 0; k < 4; ++k)
      if (name == kMetricNames[k]) return summary[k];
    throw NotFoundError("unknown metric '" + name + "'");
  }
};

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  auto folds = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    const auto& c = r.fold_counts[i];
    const auto& m = r.folds[i];
    folds.push_back({{"fold", i},
                     {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn},
                     {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"mcc", m.mcc}});
  }
  j["folds"] = std::move(folds);
  nlohmann::ordered_json s;
  for (std::size_t k = 0; k < 4; ++k) s[kMetricNames[k]] = {{"mean", r.summary[k].mean}, {"std", r.summary[k].std}};
  j["summary"] = std::move(s);
  return j;
}

inline MetricsReport metrics_report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  for (const auto& f : j.at("folds")) {
    ConfusionCounts c;
    c.tp = f.at("tp").get<std::uint64_t>();
    c.fp = f.at("fp").get<std::uint64_t>();
    c.fn = f.at("fn").get<std::uint64_t>();
    c.tn = f.at("tn").get<std::uint64_t>();
    r.add_fold(c);
  }
  return r;
}

}  // namespace cvrm::eval
