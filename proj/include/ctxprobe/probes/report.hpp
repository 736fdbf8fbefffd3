#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace ctxprobe {

inline constexpr int kReportSchemaVersion = 1;

struct ReportRow {
  // Condition keys (sequence id, unit size, ...) in insertion order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::vector<std::pair<std::string, double>> metrics;
  // Empty when the row is valid; otherwise a short reason such as
  // "exceeds context".
  std::string flag;

  ReportRow& key(std::string name, std::string value);
  ReportRow& key(std::string name, std::size_t value) { return key(std::move(name), std::to_string(value)); }
  ReportRow& metric(std::string name, double value);
  [[nodiscard]] double metric_value(const std::string& name) const;
  [[nodiscard]] const std::string& key_value(const std::string& name) const;
  bool operator==(const ReportRow&) const = default;
};

struct ProbeReport {
  std::string probe;
  int probe_version = 1;
  std::string scorer;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;
  std::size_t scorer_queries = 0;
  // Free-form notes carried into the structured file.
  std::map<std::string, std::string> notes;

  [[nodiscard]] std::size_t flagged_rows() const;
  [[nodiscard]] bool partial() const { return flagged_rows() > 0; }

  // Union of key and metric columns in first-seen order.
  [[nodiscard]] std::vector<std::string> key_columns() const;
  [[nodiscard]] std::vector<std::string> metric_columns() const;

  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static ProbeReport from_json(const nlohmann::json& j);

  // Rows ordered by their key tuple; reports that differ only in row order
  // compare equal after sorting.
  void sort_rows();
};

// Writes <stem>.csv and <stem>.json, plus <stem>.run.json with the
// timestamp and worker count, which are kept out of the report itself so
// reruns are byte-identical.
struct RunInfo {
  std::size_t workers = 1;
};
void write_report(const ProbeReport& report, const std::filesystem::path& stem, const RunInfo& info = {});

// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

}  // namespace ctxprobe
