#pragma once

// Text comparison tables and SVG line charts over result rows.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gemmbench/error.hpp"
#include "gemmbench/results.hpp"

namespace gemmbench {

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string pad_left(std::string s, std::size_t width) {
  // Column widths count code points so the em dash lines up.
  std::size_t cps = 0;
  for (unsigned char ch : s) cps += (ch & 0xC0) != 0x80;
  if (cps < width) s.insert(0, width - cps, ' ');
  return s;
}

inline std::string pad_right(std::string s, std::size_t width) {
  std::size_t cps = 0;
  for (unsigned char ch : s) cps += (ch & 0xC0) != 0x80;
  if (cps < width) s.append(width - cps, ' ');
  return s;
}

inline const char* kMissing = "—";

/// Distinct series names in order of first appearance.
inline std::vector<std::string> series_names(const std::vector<ResultRow>& rows) {
  std::vector<std::string> names;
  for (const auto& r : rows) {
    if (std::find(names.begin(), names.end(), r.kernel) == names.end()) names.push_back(r.kernel);
  }
  return names;
}

inline std::string provenance(const ResultRow& r) {
  if (r.energy) return std::string(to_string(r.energy->scope));
  return r.backend ? "backend" : "in-process";
}

}  // namespace detail

/// Baseline time divided by kernel time.
inline double speedup(double baseline_ms, double kernel_ms) { return baseline_ms / kernel_ms; }

/// Per (n, kernel): mean time, speedup against `baseline_kernel` at the same
/// n, MSE, and mean power when present. Failed cells show a dash.
inline std::string render_table(const std::vector<ResultRow>& rows, const std::string& baseline_kernel,
                                bool mark_provenance = false) {
  const auto names = detail::series_names(rows);
  if (std::find(names.begin(), names.end(), baseline_kernel) == names.end()) {
    std::string avail;
    for (const auto& n : names) avail += (avail.empty() ? "" : ", ") + n;
    throw Error(Errc::argument, "baseline '" + baseline_kernel + "' not in results; available: " +
                                    (avail.empty() ? "(none)" : avail));
  }

  std::map<std::size_t, double> baseline_ms;
  for (const auto& r : rows) {
    if (r.kernel == baseline_kernel && r.ok() && r.timing && !baseline_ms.count(r.n)) {
      baseline_ms[r.n] = r.timing->mean_ms;
    }
  }
  std::set<std::size_t> sizes;
  for (const auto& r : rows) sizes.insert(r.n);
  bool shared = false;
  for (auto n : sizes) shared = shared || baseline_ms.count(n);
  if (!shared) {
    throw Error(Errc::argument, "baseline '" + baseline_kernel + "' has no ok row at any size");
  }

  using detail::pad_left;
  using detail::pad_right;
  std::string out = pad_left("n", 6) + "  " + pad_right("kernel", 12) + pad_left("mean_ms", 12) +
                    pad_left("speedup", 10) + pad_left("mse", 12) + pad_left("watts", 10) + "\n";
  for (const auto n : sizes) {
    for (const auto& name : names) {
      for (const auto& r : rows) {
        if (r.n != n || r.kernel != name) continue;
        std::string time = detail::kMissing, sp = detail::kMissing, err = detail::kMissing,
                    power = detail::kMissing;
        if (r.ok() && r.timing) {
          time = detail::fmt("%.3f", r.timing->mean_ms);
          if (auto it = baseline_ms.find(n); it != baseline_ms.end() && r.timing->mean_ms > 0) {
            sp = detail::fmt("%.2f", speedup(it->second, r.timing->mean_ms));
          }
          err = detail::fmt("%.3e", r.mse.value);
          if (r.energy) {
            power = detail::fmt("%.2f", r.energy->mean_watts);
            if (mark_provenance) power += " [" + detail::provenance(r) + "]";
          }
        }
        out += pad_left(std::to_string(n), 6) + "  " + pad_right(name, 12) + pad_left(time, 12) +
               pad_left(sp, 10) + pad_left(err, 12) + pad_left(power, 10) + "\n";
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG plots

enum class PlotMetric { time, mse, watts, joules };

inline std::optional<PlotMetric> parse_plot_metric(std::string_view s) {
  if (s == "time") return PlotMetric::time;
  if (s == "mse") return PlotMetric::mse;
  if (s == "watts") return PlotMetric::watts;
  if (s == "joules") return PlotMetric::joules;
  return std::nullopt;
}

struct PlotSpec {
  PlotMetric metric = PlotMetric::time;
  bool mark_provenance = false;
};

namespace detail {

inline std::optional<double> metric_value(const ResultRow& r, PlotMetric m) {
  if (!r.ok()) return std::nullopt;
  switch (m) {
    case PlotMetric::time: return r.timing ? std::optional(r.timing->mean_ms) : std::nullopt;
    case PlotMetric::mse: return r.mse.value;
    case PlotMetric::watts: return r.energy ? std::optional(r.energy->mean_watts) : std::nullopt;
    case PlotMetric::joules: return r.energy ? std::optional(r.energy->joules) : std::nullopt;
  }
  return std::nullopt;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace detail

/// Standalone SVG 1.1 line chart of one metric against n (log2 x axis).
/// Time and MSE use a log10 y axis unless some value is not positive, in
/// which case the axis is linear and a note says so.
inline std::string render_svg(const std::vector<ResultRow>& rows, const PlotSpec& spec) {
  struct Series {
    std::string label;
    std::map<std::size_t, double> points;  // n -> value, last row wins
  };
  std::vector<Series> series;
  for (const auto& name : detail::series_names(rows)) {
    Series s{name, {}};
    for (const auto& r : rows) {
      if (r.kernel != name) continue;
      if (const auto v = detail::metric_value(r, spec.metric)) {
        s.points[r.n] = *v;
        if (spec.mark_provenance && s.label == name) s.label += " [" + detail::provenance(r) + "]";
      }
    }
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  if (series.empty()) throw Error(Errc::argument, "no ok rows carry the requested metric");

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [n, v] : s.points) {
      xmin = std::min(xmin, std::log2(static_cast<double>(n)));
      xmax = std::max(xmax, std::log2(static_cast<double>(n)));
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  const bool wants_log = spec.metric == PlotMetric::time || spec.metric == PlotMetric::mse;
  const bool log_y = wants_log && ymin > 0.0;
  std::string note;
  if (wants_log && !log_y) note = "linear axis: log scale undefined for zero values";

  // Axis ranges.
  xmin = std::floor(xmin);
  xmax = std::ceil(xmax);
  if (xmax <= xmin) xmax = xmin + 1;
  double y0, y1;
  if (log_y) {
    y0 = std::floor(std::log10(ymin));
    y1 = std::ceil(std::log10(ymax));
    if (y1 <= y0) y1 = y0 + 1;
  } else {
    y0 = std::min(0.0, ymin);
    y1 = ymax > y0 ? ymax * 1.05 : y0 + 1.0;
  }

  constexpr double width = 720, height = 420, left = 90, right = 190, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto px = [&](double log2n) { return left + (log2n - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double v) {
    const double t = log_y ? std::log10(v) : v;
    return top + plot_h - (t - y0) / (y1 - y0) * plot_h;
  };
  using detail::fmt;

  const char* title = "";
  const char* ylabel = "";
  switch (spec.metric) {
    case PlotMetric::time:
      title = "Execution time";
      ylabel = log_y ? "mean time [ms] (log10)" : "mean time [ms]";
      break;
    case PlotMetric::mse:
      title = "Mean square error vs serial oracle";
      ylabel = log_y ? "MSE (log10)" : "MSE";
      break;
    case PlotMetric::watts:
      title = "Mean power";
      ylabel = "mean power [W]";
      break;
    case PlotMetric::joules:
      title = "Energy per multiplication";
      ylabel = "energy [J]";
      break;
  }

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt("%.0f", width) +
         "\" height=\"" + fmt("%.0f", height) + "\" viewBox=\"0 0 " + fmt("%.0f", width) + " " +
         fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fmt("%.0f", width) + "\" height=\"" + fmt("%.0f", height) +
         "\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", left + plot_w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         title + "</text>\n";

  // Frame and ticks.
  svg += "<g stroke=\"black\" fill=\"none\">\n";
  svg += "<rect x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", top) + "\" width=\"" +
         fmt("%.1f", plot_w) + "\" height=\"" + fmt("%.1f", plot_h) + "\"/>\n";
  svg += "</g>\n<g font-size=\"11\">\n";
  for (double e = xmin; e <= xmax + 1e-9; e += 1.0) {
    const double x = px(e);
    svg += "<line x1=\"" + fmt("%.1f", x) + "\" y1=\"" + fmt("%.1f", top + plot_h) + "\" x2=\"" + fmt("%.1f", x) +
           "\" y2=\"" + fmt("%.1f", top + plot_h + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", top + plot_h + 18) +
           "\" text-anchor=\"middle\">" + fmt("%.0f", std::exp2(e)) + "</text>\n";
  }
  const int yticks = log_y ? static_cast<int>(y1 - y0) : 5;
  for (int t = 0; t <= yticks; ++t) {
    const double tv = y0 + (y1 - y0) * t / yticks;
    const double y = top + plot_h - (tv - y0) / (y1 - y0) * plot_h;
    const std::string label = log_y ? "1e" + fmt("%.0f", tv) : fmt("%.3g", tv);
    svg += "<line x1=\"" + fmt("%.1f", left - 5) + "\" y1=\"" + fmt("%.1f", y) + "\" x2=\"" + fmt("%.1f", left) +
           "\" y2=\"" + fmt("%.1f", y) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", left - 8) + "\" y=\"" + fmt("%.1f", y + 4) + "\" text-anchor=\"end\">" +
           label + "</text>\n";
  }
  svg += "</g>\n";
  svg += "<text x=\"" + fmt("%.1f", left + plot_w / 2) + "\" y=\"" + fmt("%.1f", height - 18) +
         "\" text-anchor=\"middle\">N (matrix dimension, log2 scale)</text>\n";
  svg += "<text transform=\"translate(20 " + fmt("%.1f", top + plot_h / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + ylabel + "</text>\n";
  if (!note.empty()) {
    svg += "<text x=\"" + fmt("%.1f", left + 4) + "\" y=\"" + fmt("%.1f", top + 14) +
           "\" font-size=\"10\" fill=\"#555555\">" + note + "</text>\n";
  }

  // Series and legend.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = detail::kPalette[i % std::size(detail::kPalette)];
    std::string pts;
    for (const auto& [n, v] : s.points) {
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.2f", px(std::log2(static_cast<double>(n)))) + "," + fmt("%.2f", py(v));
    }
    svg += "<g class=\"series\" stroke=\"" + std::string(color) + "\" fill=\"" + color + "\">\n";
    svg += "<title>" + detail::xml_escape(s.label) + "</title>\n";
    svg += "<polyline fill=\"none\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (const auto& [n, v] : s.points) {
      svg += "<circle cx=\"" + fmt("%.2f", px(std::log2(static_cast<double>(n)))) + "\" cy=\"" +
             fmt("%.2f", py(v)) + "\" r=\"3\"/>\n";
    }
    svg += "</g>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    const double lx = left + plot_w + 15;
    svg += "<line x1=\"" + fmt("%.1f", lx) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" + fmt("%.1f", lx + 22) +
           "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", lx + 28) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" +
           detail::xml_escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void render_plot(const std::vector<ResultRow>& rows, const PlotSpec& spec,
                        const std::filesystem::path& out_path) {
  const std::string svg = render_svg(rows, spec);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + out_path.string() + " for writing");
  out << svg;
  if (!out) throw Error(Errc::io, "write failed for " + out_path.string());
}

}  // namespace gemmbench
