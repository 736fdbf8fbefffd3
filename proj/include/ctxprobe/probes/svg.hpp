#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctxprobe/probes/report.hpp"

namespace ctxprobe {

struct QuantileGroup {
  std::string label;
  std::vector<double> values;
};

// One vertical band per group: 5-95% range, interquartile box, median tick.
std::string quantile_bands_svg(const std::string& title, const std::vector<QuantileGroup>& groups, bool log_scale);

// Row-major matrix as a white-to-blue grid.
std::string heatmap_svg(const std::string& title, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::vector<double>& values);

struct Trace {
  std::string label;
  std::vector<double> y;
};
std::string line_traces_svg(const std::string& title, const std::vector<Trace>& traces);

// Picks a plot suited to the report's probe and writes <stem>.svg.
// Returns false when the probe has no quicklook.
bool write_quicklook(const ProbeReport& report, const std::filesystem::path& stem);

double quantile(std::vector<double> values, double q);

}  // namespace ctxprobe
