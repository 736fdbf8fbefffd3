#include "ctxprobe/probes/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ctxprobe/error.hpp"

namespace ctxprobe {
namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 420;
constexpr double kLeft = 60;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 70;
const char* const kPalette[] = {"#1f5fa8", "#c8553d", "#2a9d8f", "#8d6a9f", "#e9a23b", "#555555"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  return o.str();
}

struct Axis {
  double lo, hi;
  bool log;
  double map(double v) const {
    const double a = log ? std::log10(std::max(v, 1e-300)) : v;
    const double b = log ? std::log10(lo) : lo;
    const double c = log ? std::log10(hi) : hi;
    const double t = c > b ? (a - b) / (c - b) : 0.5;
    return kTop + (1.0 - t) * (kHeight - kTop - kBottom);
  }
};

std::string y_axis(const Axis& ax) {
  std::ostringstream o;
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double v = ax.log ? std::pow(10.0, std::log10(ax.lo) + k * (std::log10(ax.hi) - std::log10(ax.lo)) / 4)
                      : ax.lo + k * (ax.hi - ax.lo) / 4;
    const double y = ax.map(v);
    o << "<text x=\"" << kLeft - 5 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << format_number(std::round(v * 100) / 100)
      << "</text>\n";
  }
  return o.str();
}

}  // namespace

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::string quantile_bands_svg(const std::string& title, const std::vector<QuantileGroup>& groups, bool log_scale) {
  double lo = HUGE_VAL;
  double hi = -HUGE_VAL;
  for (const auto& g : groups)
    for (double v : g.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) lo = hi = 1.0;
  if (log_scale) lo = std::max(lo, 1e-6);
  if (hi <= lo) hi = lo * 1.1 + 1e-9;
  Axis ax{lo, hi, log_scale};
  std::ostringstream o;
  o << header(title) << y_axis(ax);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(std::max<std::size_t>(1, groups.size()));
  for (std::size_t k = 0; k < groups.size(); ++k) {
    std::vector<double> finite;
    for (double v : groups[k].values)
      if (std::isfinite(v)) finite.push_back(v);
    const double cx = kLeft + slot * (static_cast<double>(k) + 0.5);
    o << "<text x=\"" << cx << "\" y=\"" << kHeight - kBottom + 15 << "\" text-anchor=\"middle\">"
      << escape(groups[k].label) << "</text>\n";
    if (finite.empty()) continue;
    const double w = std::min(30.0, slot * 0.6);
    const double q05 = ax.map(quantile(finite, 0.05));
    const double q25 = ax.map(quantile(finite, 0.25));
    const double q50 = ax.map(quantile(finite, 0.5));
    const double q75 = ax.map(quantile(finite, 0.75));
    const double q95 = ax.map(quantile(finite, 0.95));
    const char* color = kPalette[k % 6];
    o << "<line x1=\"" << cx << "\" y1=\"" << q95 << "\" x2=\"" << cx << "\" y2=\"" << q05 << "\" stroke=\"" << color
      << "\"/>\n"
      << "<rect x=\"" << cx - w / 2 << "\" y=\"" << q75 << "\" width=\"" << w << "\" height=\"" << std::max(0.5, q25 - q75)
      << "\" fill=\"" << color << "\" fill-opacity=\"0.35\" stroke=\"" << color << "\"/>\n"
      << "<line x1=\"" << cx - w / 2 << "\" y1=\"" << q50 << "\" x2=\"" << cx + w / 2 << "\" y2=\"" << q50
      << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap_svg(const std::string& title, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::vector<double>& values) {
  const std::size_t rows = row_labels.size();
  const std::size_t cols = col_labels.size();
  if (values.size() != rows * cols) throw InvalidArgument("heatmap size mismatch");
  double hi = 0.0;
  for (double v : values)
    if (std::isfinite(v)) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  const double cw = (kWidth - kLeft - kRight) / static_cast<double>(std::max<std::size_t>(1, cols));
  const double ch = (kHeight - kTop - kBottom) / static_cast<double>(std::max<std::size_t>(1, rows));
  std::ostringstream o;
  o << header(title);
  for (std::size_t r = 0; r < rows; ++r) {
    o << "<text x=\"" << kLeft - 5 << "\" y=\"" << kTop + ch * (static_cast<double>(r) + 0.5) + 4
      << "\" text-anchor=\"end\">" << escape(row_labels[r]) << "</text>\n";
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[r * cols + c];
      const double t = std::isfinite(v) ? std::clamp(v / hi, 0.0, 1.0) : 0.0;
      const int red = static_cast<int>(255 - t * (255 - 31));
      const int green = static_cast<int>(255 - t * (255 - 95));
      const int blue = static_cast<int>(255 - t * (255 - 168));
      o << "<rect x=\"" << kLeft + cw * static_cast<double>(c) << "\" y=\"" << kTop + ch * static_cast<double>(r)
        << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\"rgb(" << red << ',' << green << ',' << blue
        << ")\"><title>" << format_number(v) << "</title></rect>\n";
    }
  }
  for (std::size_t c = 0; c < cols; ++c)
    o << "<text x=\"" << kLeft + cw * (static_cast<double>(c) + 0.5) << "\" y=\"" << kHeight - kBottom + 15
      << "\" text-anchor=\"middle\">" << escape(col_labels[c]) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string line_traces_svg(const std::string& title, const std::vector<Trace>& traces) {
  double hi = 0.0;
  std::size_t n = 1;
  for (const auto& t : traces) {
    n = std::max(n, t.y.size());
    for (double v : t.y)
      if (std::isfinite(v)) hi = std::max(hi, v);
  }
  if (hi <= 0.0) hi = 1.0;
  Axis ax{0.0, hi, false};
  std::ostringstream o;
  o << header(title) << y_axis(ax);
  const double dx = (kWidth - kLeft - kRight) / static_cast<double>(std::max<std::size_t>(1, n - 1));
  for (std::size_t k = 0; k < traces.size(); ++k) {
    o << "<polyline fill=\"none\" stroke=\"" << kPalette[k % 6] << "\" points=\"";
    for (std::size_t i = 0; i < traces[k].y.size(); ++i)
      if (std::isfinite(traces[k].y[i])) o << kLeft + dx * static_cast<double>(i) << ',' << ax.map(traces[k].y[i]) << ' ';
    o << "\"/>\n<text x=\"" << kLeft + 10 << "\" y=\"" << kHeight - kBottom + 30 + 14 * static_cast<double>(k)
      << "\" fill=\"" << kPalette[k % 6] << "\">" << escape(traces[k].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

namespace {

bool has_metric(const ReportRow& r, const std::string& m) {
  return std::any_of(r.metrics.begin(), r.metrics.end(), [&](const auto& p) { return p.first == m; });
}

// Groups metric values by the joined values of the given keys, in first-seen order.
std::vector<QuantileGroup> group_by(const ProbeReport& rep, const std::vector<std::string>& keys, const std::string& metric,
                                    const std::string& suffix = {}) {
  std::vector<QuantileGroup> groups;
  for (const auto& r : rep.rows) {
    if (!r.flag.empty() || !has_metric(r, metric)) continue;
    std::string label;
    for (const auto& k : keys) label += (label.empty() ? "" : "/") + r.key_value(k);
    label += suffix;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const QuantileGroup& g) { return g.label == label; });
    if (it == groups.end()) {
      groups.push_back({label, {}});
      it = groups.end() - 1;
    }
    it->values.push_back(r.metric_value(metric));
  }
  return groups;
}

}  // namespace

bool write_quicklook(const ProbeReport& rep, const std::filesystem::path& stem) {
  std::string svg;
  const std::string title = rep.probe + " (" + rep.scorer + ")";
  if (rep.probe == "doubling") {
    std::vector<QuantileGroup> g{{"1x", {}}, {"nx", {}}};
    for (const auto& r : rep.rows) {
      if (!r.flag.empty()) continue;
      g[0].values.push_back(r.metric_value("pppl_1x"));
      g[1].values.push_back(r.metric_value("pppl_nx"));
    }
    svg = quantile_bands_svg(title, g, true);
  } else if (rep.probe == "multiplicity") {
    svg = quantile_bands_svg(title, group_by(rep, {"unit", "multiplicity"}, "pppl"), true);
  } else if (rep.probe == "equivalent_mask") {
    std::vector<QuantileGroup> g;
    for (const char* m : {"h_single", "h_doubled", "h_equivalent_masked", "h_other_masked"}) {
      QuantileGroup q{m, {}};
      for (const auto& r : rep.rows)
        if (r.flag.empty()) q.values.push_back(r.metric_value(m));
      g.push_back(std::move(q));
    }
    svg = quantile_bands_svg(title, g, false);
  } else if (rep.probe == "flip_matrix") {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<double> values;
    for (const auto& r : rep.rows) {
      rows.push_back(r.key_value("substituted"));
      for (const auto& [name, v] : r.metrics) {
        if (name.rfind("p_", 0) != 0) continue;
        if (rows.size() == 1) cols.push_back(name.substr(2));
        values.push_back(v);
      }
    }
    svg = heatmap_svg(title, rows, cols, values);
  } else if (rep.probe == "contralateral") {
    Trace t{"fraction preferring right insertion", {}};
    for (const auto& r : rep.rows) t.y.push_back(has_metric(r, "fraction_right") ? r.metric_value("fraction_right") : std::nan(""));
    svg = line_traces_svg(title, {t});
  } else if (rep.probe == "imperfect_repeat") {
    auto paired = group_by(rep, {"proportion"}, "pppl_paired", " paired");
    auto alone = group_by(rep, {"proportion"}, "pppl_isolated", " alone");
    std::vector<QuantileGroup> g;
    for (std::size_t k = 0; k < paired.size(); ++k) {
      g.push_back(paired[k]);
      if (k < alone.size()) g.push_back(alone[k]);
    }
    svg = quantile_bands_svg(title, g, true);
  } else if (rep.probe == "needle_haystack") {
    svg = quantile_bands_svg(title, group_by(rep, {"needle", "haystack"}, "pppl_needle1"), true);
  } else if (rep.probe == "skip") {
    std::map<std::string, Trace> traces;
    for (const auto& r : rep.rows) {
      if (!has_metric(r, "p_equivalent")) continue;
      const auto& name = r.key_value("trace");
      traces[name + " equivalent"].label = name + " equivalent";
      traces[name + " equivalent"].y.push_back(r.metric_value("p_equivalent"));
      traces[name + " true"].label = name + " true";
      traces[name + " true"].y.push_back(r.metric_value("p_true"));
    }
    std::vector<Trace> list;
    for (auto& [k, t] : traces) list.push_back(std::move(t));
    svg = line_traces_svg(title, list);
  } else if (rep.probe == "context_transform") {
    svg = quantile_bands_svg(title, group_by(rep, {"transform"}, "pppl"), true);
  } else {
    return false;
  }
  std::ofstream out(stem.string() + ".svg", std::ios::binary);
  if (!out) throw Error("cannot write " + stem.string() + ".svg");
  out << svg;
  return true;
}

}  // namespace ctxprobe
