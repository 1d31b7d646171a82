// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cvrm/common/error.hpp"
#include "cvrm/data/record.hpp"

namespace cvrm::data {

/// Code -> description lookup over a TSV subset of the WHO ATC index.
/// Every row's ancestors must be present so any known code can be expanded
/// down from its anatomical main group.
class AtcTable {
 public:
  static constexpr std::string_view kSeparator = " > ";

  struct Entry {
    int level = 0;
    std::string description;
  };

  AtcTable() = default;

  static AtcTable parse(std::istream& in) {
    AtcTable table;
    std::string line;
    std::size_t row = 0;
    if (!std::getline(in, line)) throw ParseError("empty ATC table");
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "code\tlevel\tdescription")
      throw ParseError("ATC table header must be 'code<TAB>level<TAB>description'", row);
    while (std::getline(in, line)) {
      ++row;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) throw ParseError("expected 3 tab-separated columns", row);
      std::string code = line.substr(0, t1);
      const std::string level_str = line.substr(t1 + 1, t2 - t1 - 1);
      std::string desc = line.substr(t2 + 1);
      const int expected = atc_level(code);
      if (expected == 0) throw ValidationError("code", "invalid ATC code '" + code + "'", row);
      int level = 0;
      try {
        level = std::stoi(level_str);
      } catch (const std::exception&) {
        throw ParseError("level is not an integer: '" + level_str + "'", row);
      }
      if (level != expected)
        throw ValidationError("level", "code " + code + " implies level " +
                                           std::to_string(expected), row);
      if (text::trim(desc).empty()) throw ValidationError("description", "empty", row);
      if (!table.entries_.emplace(code, Entry{level, std::move(desc)}).second)
        throw ValidationError("code", "duplicate code '" + code + "'", row);
    }
    for (const auto& [code, entry] : table.entries_) {
      for (const auto& prefix : ancestors(code))
        if (!table.entries_.count(prefix))
          throw ValidationError("code", "ancestor " + prefix + " of " + code + " missing");
    }
    return table;
  }

  static AtcTable load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open ATC table: " + path.string());
    return parse(in);
  }

  /// Bundled cardiovascular-focused subset shipped in data/.
  static AtcTable load_bundled() {
#ifdef CVRM_DATA_DIR
    return load(std::filesystem::path(CVRM_DATA_DIR) / "atc_subset.tsv");
#else
    throw NotFoundError("no bundled data directory compiled in");
#endif
  }

  bool contains(std::string_view code) const { return entries_.count(std::string(code)) > 0; }
  std::size_t size() const { return entries_.size(); }

  const Entry& entry(std::string_view code) const {
    auto it = entries_.find(std::string(code));
    if (it == entries_.end()) throw NotFoundError("ATC code not found: '" + std::string(code) + "'");
    return it->second;
  }

  /// Level descriptions from the anatomical group down to `code`, joined by
  /// kSeparator. Unknown or malformed codes throw NotFoundError.
  std::string decompress(std::string_view code) const {
    if (!is_valid_atc_code(code))
      throw NotFoundError("ATC code not found (invalid code): '" + std::string(code) + "'");
    std::string out;
    for (const auto& prefix : ancestors(code)) {
      out += entry(prefix).description;
      out += kSeparator;
    }
    out += entry(code).description;
    return out;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }

  /// Proper prefixes of a code that are themselves ATC levels.
  static std::vector<std::string> ancestors(std::string_view code) {
    std::vector<std::string> out;
    for (std::size_t len : {1u, 3u, 4u, 5u})
      if (len < code.size()) out.emplace_back(code.substr(0, len));
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace cvrm::data
