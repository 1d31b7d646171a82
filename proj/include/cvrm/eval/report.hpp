// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"
#include "cvrm/eval/metrics.hpp"

namespace cvrm::eval {

/// Content-addressed 12-hex id of a run's effective configuration.
inline std::string run_id(std::string_view effective_config) {
  return text::hex64(text::fnv1a(effective_config)).substr(0, 12);
}

/// "92.48 (1.37)" for percentages, "0.758 (0.021)" for MCC.
inline std::string format_cell(const std::string& metric, const Summary& s) {
  char buf[64];
  if (metric == "mcc")
    std::snprintf(buf, sizeof buf, "%.3f (%.3f)", s.mean, s.std);
  else
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

/// One row of a comparison table.
struct ReportRow {
  std::string run_id;
  std::string label;
  std::array<std::optional<Summary>, 4> cells;
};

inline ReportRow make_row(const std::string& id, const std::string& label, const MetricsReport& r) {
  ReportRow row{id, label, {}};
  if (!r.empty())
    for (std::size_t k = 0; k < 4; ++k) row.cells[k] = r.summary[k];
  return row;
}

/// Reads a row from report.json; metrics absent from its summary stay empty.
inline ReportRow row_from_json(const nlohmann::json& j) {
  ReportRow row;
  row.run_id = j.value("run_id", std::string());
  row.label = j.value("label", row.run_id);
  if (j.contains("summary")) {
    const auto& s = j.at("summary");
    for (std::size_t k = 0; k < 4; ++k)
      if (s.contains(kMetricNames[k]))
        row.cells[k] = Summary{s.at(kMetricNames[k]).at("mean").get<double>(), s.at(kMetricNames[k]).at("std").get<double>()};
  }
  return row;
}

/// Plain-text table, one row per run, ordered by run id. Missing cells are "--".
inline std::string render_table(std::vector<ReportRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
  const std::array<std::string, 6> header = {"Run", "Model", "Precision", "Recall", "F1", "MCC"};
  std::vector<std::array<std::string, 6>> body;
  for (const auto& r : rows) {
    std::array<std::string, 6> line = {r.run_id, r.label, "", "", "", ""};
    for (std::size_t k = 0; k < 4; ++k) line[k + 2] = r.cells[k] ? format_cell(kMetricNames[k], *r.cells[k]) : "--";
    body.push_back(line);
  }
  std::array<std::size_t, 6> width{};
  for (std::size_t c = 0; c < 6; ++c) {
    width[c] = header[c].size();
    for (const auto& l : body) width[c] = std::max(width[c], l[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::array<std::string, 6>& l) {
    for (std::size_t c = 0; c < 6; ++c) {
      out << l[c];
      if (c + 1 < 6) out << std::string(width[c] - l[c].size() + 2, ' ');
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 10, '-') << '\n';
  for (const auto& l : body) emit(l);
  return out.str();
}

/// Files of one run directory: config.json (input bytes, untouched),
/// effective_config.json, report.json, report.txt and run.json.
struct RunArtifact {
  std::string id;
  std::string label;
  std::string config_snapshot;
  std::string effective_config;
  MetricsReport report;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();
  std::vector<std::string> checkpoints;
  double wall_clock_seconds = 0.0;
};

inline nlohmann::ordered_json report_json(const RunArtifact& a) {
  auto j = to_json(a.report);
  nlohmann::ordered_json out{{"run_id", a.id}, {"label", a.label}};
  out["folds"] = j["folds"];
  out["summary"] = j["summary"];
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << s;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_artifact(const std::filesystem::path& dir, const RunArtifact& a) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", a.config_snapshot);
  write_text(dir / "effective_config.json", a.effective_config);
  write_text(dir / "report.json", report_json(a).dump(2) + "\n");
  write_text(dir / "report.txt", render_table({make_row(a.id, a.label, a.report)}));
  nlohmann::ordered_json run{{"run_id", a.id},
                             {"label", a.label},
                             {"wall_clock_seconds", a.wall_clock_seconds},
                             {"checkpoints", a.checkpoints},
                             {"details", a.details}};
  write_text(dir / "run.json", run.dump(2) + "\n");
}

inline ReportRow load_row(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "report.json" : dir;
  try {
    return row_from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace cvrm::eval
