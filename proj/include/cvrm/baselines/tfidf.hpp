// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"

namespace cvrm::baselines {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Lowercased letter runs of at least two characters.
inline std::vector<std::string> tfidf_terms(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : text::letter_words(s))
    if (text::utf8_chars(w).size() >= 2) out.push_back(std::move(w));
  return out;
}

/// Unigram TF-IDF with raw term counts, smoothed idf
/// ln((1 + N) / (1 + df)) + 1 and L2-normalized rows.
class TfidfModel {
 public:
  TfidfModel() = default;

  static TfidfModel fit(const std::vector<std::string>& docs) {
    if (docs.empty()) throw ConfigError("TF-IDF needs a non-empty corpus");
    std::map<std::string, std::size_t> df;
    for (const auto& d : docs) {
      std::map<std::string, int> seen;
      for (auto& t : tfidf_terms(d)) seen[std::move(t)] = 1;
      for (const auto& [t, _] : seen) ++df[t];
    }
    if (df.empty()) throw ValidationError("vocabulary", "empty after filtering");
    TfidfModel m;
    const auto n = static_cast<double>(docs.size());
    int idx = 0;
    for (const auto& [term, count] : df) {
      m.vocab_.emplace(term, idx++);
      m.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    return m;
  }

  static std::pair<TfidfModel, SparseRows> fit_transform(const std::vector<std::string>& docs) {
    TfidfModel m = fit(docs);
    SparseRows x = m.transform(docs);
    return {std::move(m), std::move(x)};
  }

  SparseRows transform(const std::vector<std::string>& docs) const {
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t r = 0; r < docs.size(); ++r) {
      std::map<int, double> counts;
      for (const auto& t : tfidf_terms(docs[r])) {
        auto it = vocab_.find(t);
        if (it != vocab_.end()) counts[it->second] += 1.0;
      }
      double norm = 0.0;
      for (auto& [c, v] : counts) {
        v *= idf_[static_cast<std::size_t>(c)];
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (const auto& [c, v] : counts)
        trips.emplace_back(static_cast<int>(r), c, norm > 0.0 ? v / norm : 0.0);
    }
    SparseRows x(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(idf_.size()));
    x.setFromTriplets(trips.begin(), trips.end());
    x.makeCompressed();
    return x;
  }

  std::size_t size() const { return idf_.size(); }
  const std::map<std::string, int>& vocabulary() const { return vocab_; }
  const std::vector<double>& idf() const { return idf_; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    auto terms = nlohmann::ordered_json::array();
    for (const auto& [t, _] : vocab_) terms.push_back(t);
    j["vocabulary"] = std::move(terms);
    j["idf"] = idf_;
    return j;
  }

  static TfidfModel from_json(const nlohmann::json& j) {
    TfidfModel m;
    const auto terms = j.at("vocabulary").get<std::vector<std::string>>();
    m.idf_ = j.at("idf").get<std::vector<double>>();
    if (terms.size() != m.idf_.size()) throw ValidationError("idf", "length differs from vocabulary");
    for (std::size_t i = 0; i < terms.size(); ++i) m.vocab_.emplace(terms[i], static_cast<int>(i));
    return m;
  }

 private:
  std::map<std::string, int> vocab_;
  std::vector<double> idf_;
};

}  // namespace cvrm::baselines
