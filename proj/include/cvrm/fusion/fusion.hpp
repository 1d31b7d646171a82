// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"
#include "cvrm/data/atc.hpp"
#include "cvrm/data/record.hpp"

namespace cvrm::fusion {

inline constexpr std::size_t kMedDim = 768;
inline constexpr std::size_t kAnthroDim = 3;
inline constexpr std::size_t kStructuredDim = kMedDim + kAnthroDim;
inline constexpr double kAgeMean = 74.5;
inline constexpr double kAgeStd = 9.3;

using Vec = std::vector<double>;
using EmbeddingMap = std::map<std::string, Vec>;

/// Reads `code<TAB>v1<TAB>...<TAB>v768` rows. Blank lines are skipped.
inline EmbeddingMap read_embeddings(std::istream& in, std::size_t dim = kMedDim) {
  EmbeddingMap out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() - 1 != dim)
      throw ValidationError("dimension", "expected " + std::to_string(dim) + " values, got " +
                                             std::to_string(cols.size() - 1), row);
    Vec v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const std::string& s = cols[i + 1];
      char* end = nullptr;
      v[i] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v[i]))
        throw ParseError("bad number '" + s + "' in column " + std::to_string(i + 2), row);
    }
    if (!out.emplace(cols[0], std::move(v)).second)
      throw ValidationError("code", "duplicate code '" + cols[0] + "'", row);
  }
  return out;
}

inline EmbeddingMap load_embedding_file(const std::filesystem::path& path, std::size_t dim = kMedDim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open embedding file: " + path.string());
  return read_embeddings(in, dim);
}

inline void write_embeddings(std::ostream& out, const EmbeddingMap& m) {
  char buf[32];
  for (const auto& [code, v] : m) {
    out << code;
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), "%.17g", x);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

inline void save_embedding_file(const std::filesystem::path& path, const EmbeddingMap& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedding file: " + path.string());
  write_embeddings(out, m);
}

inline double l2_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Signed feature hashing of lowercase words into `dim` buckets, then L2
/// normalization. Text without words maps to the zero vector.
inline Vec hashed_fallback_embed(std::string_view description, std::size_t dim = kMedDim) {
  Vec v(dim, 0.0);
  for (const auto& w : text::letter_words(description)) {
    const std::uint64_t h = text::fnv1a(w);
    const std::size_t idx = static_cast<std::size_t>(h % dim);
    v[idx] += (h >> 63) ? -1.0 : 1.0;
  }
  const double n = l2_norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

enum class EmbeddingSource { precomputed_file, hashed_fallback };

inline std::string to_string(EmbeddingSource s) {
  return s == EmbeddingSource::precomputed_file ? "precomputed_file" : "hashed_fallback";
}

/// Maps an ATC code to a 768-dim vector.
class MedEmbedder {
 public:
  /// Decompresses the code with `atc` and hashes the description.
  static MedEmbedder hashed(const data::AtcTable& atc) {
    MedEmbedder e;
    e.source_ = EmbeddingSource::hashed_fallback;
    e.atc_ = &atc;
    return e;
  }

  /// Looks codes up in a precomputed table. `atc`, when given, is used to
  /// validate codes so unknown codes fail the same way in both modes.
  static MedEmbedder precomputed(std::shared_ptr<const EmbeddingMap> table,
                                 const data::AtcTable* atc = nullptr) {
    MedEmbedder e;
    e.source_ = EmbeddingSource::precomputed_file;
    e.table_ = std::move(table);
    e.atc_ = atc;
    return e;
  }

  EmbeddingSource source() const { return source_; }

  Vec embed(const std::string& code) const {
    if (source_ == EmbeddingSource::hashed_fallback) return hashed_fallback_embed(atc_->decompress(code));
    if (atc_) atc_->decompress(code);
    auto it = table_->find(code);
    if (it == table_->end()) throw NotFoundError("no precomputed embedding for ATC code '" + code + "'");
    return it->second;
  }

 private:
  EmbeddingSource source_ = EmbeddingSource::hashed_fallback;
  const data::AtcTable* atc_ = nullptr;
  std::shared_ptr<const EmbeddingMap> table_;
};

enum class UnknownCodePolicy { error, skip };

struct MedicationEmbedding {
  Vec vector = Vec(kMedDim, 0.0);
  EmbeddingSource source = EmbeddingSource::hashed_fallback;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Mean of the per-medication vectors; zero vector for an empty list.
inline MedicationEmbedding aggregate_patient_meds(const std::vector<data::MedicationEntry>& entries,
                                                  const MedEmbedder& embedder,
                                                  UnknownCodePolicy policy = UnknownCodePolicy::error) {
  MedicationEmbedding out;
  out.source = embedder.source();
  for (const auto& e : entries) {
    Vec v;
    try {
      v = embedder.embed(e.atc_code);
    } catch (const NotFoundError& err) {
      if (policy == UnknownCodePolicy::error) throw;
      spdlog::warn("skipping medication: {}", err.what());
      ++out.skipped;
      continue;
    }
    if (v.size() != out.vector.size()) throw ShapeError("medication embedding has wrong dimension");
    for (std::size_t i = 0; i < v.size(); ++i) out.vector[i] += v[i];
    ++out.used;
  }
  if (out.used > 0)
    for (double& x : out.vector) x /= static_cast<double>(out.used);
  return out;
}

struct AnthropometricVector {
  double normalized_age = 0.0;
  double gender_onehot[2] = {0.0, 0.0};  // [male, female]

  Vec values() const { return {normalized_age, gender_onehot[0], gender_onehot[1]}; }
};

inline AnthropometricVector anthropometrics(int age, data::Gender gender) {
  AnthropometricVector a;
  a.normalized_age = (static_cast<double>(age) - kAgeMean) / kAgeStd;
  a.gender_onehot[gender == data::Gender::male ? 0 : 1] = 1.0;
  return a;
}

enum class Modality { text, meds, anthro };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::meds: return "meds";
    case Modality::anthro: return "anthro";
  }
  return "?";
}

struct ModalitySpan {
  Modality modality;
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Concatenated feature with the offset of every modality.
struct FusedFeature {
  Vec vector;
  std::vector<ModalitySpan> spans;

  const ModalitySpan& span(Modality m) const {
    for (const auto& s : spans)
      if (s.modality == m) return s;
    throw NotFoundError("fused feature has no '" + to_string(m) + "' span");
  }

  Vec extract(Modality m) const {
    const auto& s = span(m);
    return Vec(vector.begin() + static_cast<std::ptrdiff_t>(s.offset),
               vector.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
  }
};

/// Concatenates parts; modalities must appear in the order text, meds,
/// anthro (any may be absent) with their fixed widths.
inline FusedFeature assemble(const std::vector<std::pair<Modality, Vec>>& parts,
                             std::size_t text_dim) {
  FusedFeature f;
  int last = -1;
  for (const auto& [m, v] : parts) {
    if (static_cast<int>(m) <= last)
      throw ValidationError("modality_spans", "modality '" + to_string(m) + "' out of order");
    last = static_cast<int>(m);
    const std::size_t want = m == Modality::text ? text_dim : m == Modality::meds ? kMedDim : kAnthroDim;
    if (v.size() != want)
      throw ShapeError(to_string(m) + " feature has " + std::to_string(v.size()) + " dims, expected " +
                       std::to_string(want));
    f.spans.push_back({m, f.vector.size(), v.size()});
    f.vector.insert(f.vector.end(), v.begin(), v.end());
  }
  return f;
}

inline FusedFeature late_fuse(const Vec& text_feature, const MedicationEmbedding& meds,
                              const AnthropometricVector& anthro, std::size_t text_dim = 512) {
  return assemble({{Modality::text, text_feature}, {Modality::meds, meds.vector},
                   {Modality::anthro, anthro.values()}},
                  text_dim);
}

/// The structured block [meds | anthro] (771 values) appended after the
/// pooled text feature.
inline Vec structured_features(const data::PatientRecord& r, const MedEmbedder& embedder,
                               UnknownCodePolicy policy = UnknownCodePolicy::error) {
  Vec out = aggregate_patient_meds(r.medications, embedder, policy).vector;
  const Vec a = anthropometrics(r.age, r.gender).values();
  out.insert(out.end(), a.begin(), a.end());
  return out;
}

}  // namespace cvrm::fusion
