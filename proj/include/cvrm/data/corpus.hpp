// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/data/record.hpp"

namespace cvrm::data {

/// Reads a JSONL corpus. Blank lines are skipped; every other line must be a
/// valid record. Errors carry the 1-based line number.
inline std::vector<PatientRecord> read_corpus(std::istream& in) {
  std::vector<PatientRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    PatientRecord r = record_from_json(j, line_no);
    if (!seen.insert(r.patient_id).second)
      throw ValidationError("patient_id", "duplicate id '" + r.patient_id + "'", line_no);
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<PatientRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open corpus file: " + path.string());
  return read_corpus(in);
}

inline void write_corpus(std::ostream& out, const std::vector<PatientRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline void save_corpus(const std::filesystem::path& path,
                        const std::vector<PatientRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  write_corpus(out, records);
  if (!out) throw Error("write failed: " + path.string());
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest: " + path.string());
  out << to_json(m).dump(2) << '\n';
}

}  // namespace cvrm::data
