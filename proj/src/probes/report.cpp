#include "ctxprobe/probes/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

ReportRow& ReportRow::key(std::string name, std::string value) {
  keys.emplace_back(std::move(name), std::move(value));
  return *this;
}

ReportRow& ReportRow::metric(std::string name, double value) {
  metrics.emplace_back(std::move(name), value);
  return *this;
}

double ReportRow::metric_value(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw InvalidArgument("report row has no metric '" + name + "'");
}

const std::string& ReportRow::key_value(const std::string& name) const {
  for (const auto& [k, v] : keys)
    if (k == name) return v;
  throw InvalidArgument("report row has no key '" + name + "'");
}

std::size_t ProbeReport::flagged_rows() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.flag.empty(); }));
}

namespace {

template <typename Pairs>
void collect_names(const Pairs& pairs, std::vector<std::string>& names) {
  for (const auto& [k, v] : pairs)
    if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> ProbeReport::key_columns() const {
  std::vector<std::string> names;
  for (const auto& r : rows) collect_names(r.keys, names);
  return names;
}

std::vector<std::string> ProbeReport::metric_columns() const {
  std::vector<std::string> names;
  for (const auto& r : rows) collect_names(r.metrics, names);
  return names;
}

std::string ProbeReport::to_csv() const {
  const auto keys = key_columns();
  const auto metrics = metric_columns();
  std::ostringstream out;
  for (const auto& k : keys) out << csv_escape(k) << ',';
  for (const auto& m : metrics) out << csv_escape(m) << ',';
  out << "flag\n";
  for (const auto& r : rows) {
    for (const auto& k : keys) {
      auto it = std::find_if(r.keys.begin(), r.keys.end(), [&](const auto& p) { return p.first == k; });
      if (it != r.keys.end()) out << csv_escape(it->second);
      out << ',';
    }
    for (const auto& m : metrics) {
      auto it = std::find_if(r.metrics.begin(), r.metrics.end(), [&](const auto& p) { return p.first == m; });
      if (it != r.metrics.end()) out << format_number(it->second);
      out << ',';
    }
    out << csv_escape(r.flag) << '\n';
  }
  return out.str();
}

nlohmann::json ProbeReport::to_json() const {
  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json k = nlohmann::json::array();
    for (const auto& [name, value] : r.keys) k.push_back({name, value});
    nlohmann::json m = nlohmann::json::array();
    // Non-finite metrics are written as strings; JSON has no NaN.
    for (const auto& [name, value] : r.metrics) {
      if (std::isfinite(value)) m.push_back({name, value});
      else m.push_back({name, format_number(value)});
    }
    nlohmann::json row = {{"keys", k}, {"metrics", m}};
    if (!r.flag.empty()) row["flag"] = r.flag;
    jrows.push_back(std::move(row));
  }
  return {{"schema_version", kReportSchemaVersion},
          {"probe", probe},
          {"probe_version", probe_version},
          {"scorer", scorer},
          {"config", config},
          {"provenance", {{"seed", seed}, {"scorer_queries", scorer_queries}}},
          {"notes", notes},
          {"rows", jrows}};
}

ProbeReport ProbeReport::from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion)
    throw InvalidArgument("unsupported report schema version");
  ProbeReport r;
  r.probe = j.at("probe");
  r.probe_version = j.at("probe_version");
  r.scorer = j.at("scorer");
  r.config = j.at("config");
  r.seed = j.at("provenance").at("seed");
  r.scorer_queries = j.at("provenance").at("scorer_queries");
  r.notes = j.value("notes", std::map<std::string, std::string>{});
  for (const auto& jr : j.at("rows")) {
    ReportRow row;
    for (const auto& k : jr.at("keys")) row.key(k[0].get<std::string>(), k[1].get<std::string>());
    for (const auto& m : jr.at("metrics")) {
      if (m[1].is_string()) {
        const std::string s = m[1];
        const double v = s == "nan" ? std::nan("") : (s == "inf" ? HUGE_VAL : -HUGE_VAL);
        row.metric(m[0].get<std::string>(), v);
      } else {
        row.metric(m[0].get<std::string>(), m[1].get<double>());
      }
    }
    row.flag = jr.value("flag", std::string());
    r.rows.push_back(std::move(row));
  }
  return r;
}

void ProbeReport::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.keys < b.keys; });
}

void write_report(const ProbeReport& report, const std::filesystem::path& stem, const RunInfo& info) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
  };
  write(stem.string() + ".csv", report.to_csv());
  write(stem.string() + ".json", report.to_json().dump(2) + "\n");
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  nlohmann::json run = {{"probe", report.probe}, {"unix_time", secs}, {"workers", info.workers}};
  write(stem.string() + ".run.json", run.dump(2) + "\n");
}

}  // namespace ctxprobe
