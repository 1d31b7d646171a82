// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace cvrm::zeroshot {

struct DeidRule {
  std::string name;
  std::string pattern;
  std::string replacement;  // <DATUM>, <PERSOON> or <ID>
};

/// Masking rules in application order: dates, person names, long digit runs.
/// No replacement tag contains a digit or a capitalized lowercase word, so
/// masked output never re-triggers a rule.
inline const std::vector<DeidRule>& deid_rules() {
  static const std::vector<DeidRule> rules = {
      {"date_numeric", R"(\b\d{1,2}[-/]\d{1,2}[-/]\d{4}\b)", "<DATUM>"},
      {"date_written",
       R"(\b\d{1,2} (januari|februari|maart|april|mei|juni|juli|augustus|september|oktober|november|december) \d{4}\b)",
       "<DATUM>"},
      {"person", R"(\b[A-Z][a-z]+(?: (?:de|van|der|den|ter|ten))* [A-Z][a-z]+\b)", "<PERSOON>"},
      {"identifier", R"(\d{7,})", "<ID>"},
  };
  return rules;
}

namespace detail {

inline const std::vector<std::regex>& compiled_rules() {
  static const std::vector<std::regex> compiled = [] {
    std::vector<std::regex> out;
    for (const auto& r : deid_rules()) out.emplace_back(r.pattern, std::regex::ECMAScript | std::regex::optimize);
    return out;
  }();
  return compiled;
}

}  // namespace detail

/// Replaces dates, names and identifiers with their tags. Idempotent.
inline std::string deidentify(std::string_view text) {
  std::string out(text);
  const auto& rules = deid_rules();
  const auto& compiled = detail::compiled_rules();
  for (std::size_t i = 0; i < rules.size(); ++i) out = std::regex_replace(out, compiled[i], rules[i].replacement);
  return out;
}

struct Leak {
  std::string rule;
  std::string match;
};

/// Every substring that still matches a masking rule.
inline std::vector<Leak> find_leaks(std::string_view text) {
  std::vector<Leak> out;
  const std::string s(text);
  const auto& rules = deid_rules();
  const auto& compiled = detail::compiled_rules();
  for (std::size_t i = 0; i < rules.size(); ++i)
    for (std::sregex_iterator it(s.begin(), s.end(), compiled[i]), end; it != end; ++it)
      out.push_back({rules[i].name, it->str()});
  return out;
}

}  // namespace cvrm::zeroshot
