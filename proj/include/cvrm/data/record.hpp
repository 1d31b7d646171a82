// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"

namespace cvrm::data {

enum class Gender { male, female };

inline std::string_view gender_code(Gender g) { return g == Gender::male ? "M" : "F"; }

struct ConsultNote {
  std::string date;  ///< ISO-8601 calendar date, YYYY-MM-DD.
  std::string text;

  bool operator==(const ConsultNote&) const = default;
};

struct MedicationEntry {
  std::string atc_code;
  std::optional<std::string> description;  ///< Filled in by ATC decompression.

  bool operator==(const MedicationEntry&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  int age = 0;
  Gender gender = Gender::male;
  std::vector<ConsultNote> consults;  ///< Ascending by date.
  std::vector<MedicationEntry> medications;
  int label = 0;  ///< 0 non-eligible, 1 eligible.

  bool operator==(const PatientRecord&) const = default;
};

struct DatasetManifest {
  std::size_t record_count = 0;
  std::size_t positive_count = 0;
  std::uint64_t generator_seed = 0;
  std::string schema_version = "1.0";
  std::size_t male_count = 0;
  double age_mean = 0.0;
  double age_std = 0.0;
};

inline constexpr int kMinAge = 18;
inline constexpr int kMaxAge = 110;

/// ATC grammar: letter, then optionally two digits, a letter, a letter and
/// two digits (levels 1 to 5: "C", "C07", "C07A", "C07AB", "C07AB02").
inline bool is_valid_atc_code(std::string_view code) {
  auto upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  switch (code.size()) {
    case 7:
      if (!digit(code[5]) || !digit(code[6])) return false;
      [[fallthrough]];
    case 5:
      if (!upper(code[4])) return false;
      [[fallthrough]];
    case 4:
      if (!upper(code[3])) return false;
      [[fallthrough]];
    case 3:
      if (!digit(code[1]) || !digit(code[2])) return false;
      [[fallthrough]];
    case 1:
      return upper(code[0]);
    default:
      return false;
  }
}

/// ATC hierarchy level (1..5) implied by the code length; 0 if invalid.
inline int atc_level(std::string_view code) {
  if (!is_valid_atc_code(code)) return 0;
  switch (code.size()) {
    case 1: return 1;
    case 3: return 2;
    case 4: return 3;
    case 5: return 4;
    default: return 5;
  }
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (!text::is_digit(s[i])) return false;
  const int y = std::stoi(std::string(s.substr(0, 4)));
  const unsigned m = static_cast<unsigned>(std::stoi(std::string(s.substr(5, 2))));
  const unsigned d = static_cast<unsigned>(std::stoi(std::string(s.substr(8, 2))));
  return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                     std::chrono::day{d}}
      .ok();
}

/// Throws ValidationError naming the first offending field.
inline void validate(const PatientRecord& r, std::size_t line = 0) {
  if (text::trim(r.patient_id).empty())
    throw ValidationError("patient_id", "must be non-empty", line);
  if (r.age < kMinAge || r.age > kMaxAge)
    throw ValidationError("age", "must be within [18, 110], got " + std::to_string(r.age), line);
  if (r.label != 0 && r.label != 1)
    throw ValidationError("label", "must be 0 or 1, got " + std::to_string(r.label), line);
  if (r.consults.empty()) throw ValidationError("consults", "at least one consult required", line);
  for (std::size_t i = 0; i < r.consults.size(); ++i) {
    const auto& c = r.consults[i];
    if (!is_iso_date(c.date))
      throw ValidationError("consults[" + std::to_string(i) + "].date",
                            "not an ISO-8601 date: '" + c.date + "'", line);
    if (text::trim(c.text).empty())
      throw ValidationError("consults[" + std::to_string(i) + "].text", "empty text", line);
    if (i > 0 && c.date < r.consults[i - 1].date)
      throw ValidationError("consults", "not sorted ascending by date", line);
  }
  for (std::size_t i = 0; i < r.medications.size(); ++i) {
    if (!is_valid_atc_code(r.medications[i].atc_code))
      throw ValidationError("medications[" + std::to_string(i) + "]",
                            "not a valid uppercase ATC code: '" + r.medications[i].atc_code + "'",
                            line);
  }
}

/// Canonical corpus-line encoding; field order is fixed so save/load
/// round-trips byte for byte.
inline nlohmann::ordered_json to_json(const PatientRecord& r) {
  nlohmann::ordered_json j;
  j["patient_id"] = r.patient_id;
  j["age"] = r.age;
  j["gender"] = gender_code(r.gender);
  auto consults = nlohmann::ordered_json::array();
  for (const auto& c : r.consults) {
    nlohmann::ordered_json cj;
    cj["date"] = c.date;
    cj["text"] = c.text;
    consults.push_back(std::move(cj));
  }
  j["consults"] = std::move(consults);
  auto meds = nlohmann::ordered_json::array();
  for (const auto& m : r.medications) meds.push_back(m.atc_code);
  j["medications"] = std::move(meds);
  j["label"] = r.label;
  return j;
}

/// Parses and validates one corpus object.
template <typename Json>
PatientRecord record_from_json(const Json& j, std::size_t line = 0) {
  static const std::vector<std::string> kFields = {"patient_id", "age",         "gender",
                                                   "consults",   "medications", "label"};
  if (!j.is_object()) throw ValidationError("", "expected a JSON object", line);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(kFields.begin(), kFields.end(), it.key()) == kFields.end())
      throw ValidationError(it.key(), "unknown field", line);
  }
  for (const auto& f : kFields)
    if (!j.contains(f)) throw ValidationError(f, "missing", line);

  PatientRecord r;
  if (!j["patient_id"].is_string()) throw ValidationError("patient_id", "must be a string", line);
  r.patient_id = j["patient_id"].template get<std::string>();

  if (!j["age"].is_number_integer()) throw ValidationError("age", "must be an integer", line);
  r.age = j["age"].template get<int>();

  if (!j["gender"].is_string()) throw ValidationError("gender", "must be \"M\" or \"F\"", line);
  const auto g = j["gender"].template get<std::string>();
  if (g == "M") r.gender = Gender::male;
  else if (g == "F") r.gender = Gender::female;
  else throw ValidationError("gender", "must be \"M\" or \"F\", got '" + g + "'", line);

  if (!j["label"].is_number_integer()) throw ValidationError("label", "must be 0 or 1", line);
  r.label = j["label"].template get<int>();

  if (!j["consults"].is_array()) throw ValidationError("consults", "must be an array", line);
  for (const auto& cj : j["consults"]) {
    if (!cj.is_object() || !cj.contains("date") || !cj.contains("text") || cj.size() != 2 ||
        !cj["date"].is_string() || !cj["text"].is_string())
      throw ValidationError("consults", "each consult needs exactly string fields date, text",
                            line);
    r.consults.push_back({cj["date"].template get<std::string>(),
                          cj["text"].template get<std::string>()});
  }

  if (!j["medications"].is_array()) throw ValidationError("medications", "must be an array", line);
  for (const auto& mj : j["medications"]) {
    if (!mj.is_string()) throw ValidationError("medications", "entries must be strings", line);
    r.medications.push_back({mj.template get<std::string>(), std::nullopt});
  }
  validate(r, line);
  return r;
}

inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["record_count"] = m.record_count;
  j["positive_count"] = m.positive_count;
  j["generator_seed"] = m.generator_seed;
  j["schema_version"] = m.schema_version;
  j["male_count"] = m.male_count;
  j["age_mean"] = m.age_mean;
  j["age_std"] = m.age_std;
  return j;
}

inline std::vector<int> labels_of(const std::vector<PatientRecord>& records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

}  // namespace cvrm::data
