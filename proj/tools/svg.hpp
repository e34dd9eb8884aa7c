#pragma once

// Minimal static SVG emission for loss curves and weight histograms.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace imltool {

struct SvgSeries {
  std::string label;
  std::vector<double> values;
};

inline void write_line_chart_svg(const std::string& path, const std::string& title,
                                 const std::vector<SvgSeries>& series) {
  const double w = 720, h = 420, ml = 60, mr = 20, mt = 40, mb = 40;
  double lo = 0.0, hi = 1.0;
  std::size_t max_n = 1;
  bool first = true;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    max_n = std::max(max_n, s.values.size());
  }
  if (hi == lo) hi = lo + 1.0;

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  char buf[128];
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.values.empty()) continue;
    std::string pts;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      double x = ml + (w - ml - mr) * (s.values.size() == 1
                                           ? 0.0
                                           : static_cast<double>(i) /
                                                 static_cast<double>(s.values.size() - 1));
      double y = h - mb - (h - mt - mb) * (s.values[i] - lo) / (hi - lo);
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", x, y);
      pts += buf;
    }
    const char* color = palette[si % 8];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='"
        << pts << "'/>\n";
    out << "<text x='" << ml + 4 << "' y='" << mt + 16 * (si + 1) << "' fill='" << color
        << "' font-size='12'>" << s.label << "</text>\n";
  }
  std::snprintf(buf, sizeof buf, "%.4g", lo);
  out << "<text x='8' y='" << h - mb << "' font-size='11'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof buf, "%.4g", hi);
  out << "<text x='8' y='" << mt + 8 << "' font-size='11'>" << buf << "</text>\n";
  out << "</svg>\n";
}

inline void write_histogram_svg(const std::string& path, const std::string& title,
                                const std::vector<double>& values, int bins = 30) {
  if (values.empty() || bins < 1) return;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (hi == lo) hi = lo + 1.0;
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
    if (b >= counts.size()) b = counts.size() - 1;
    ++counts[b];
  }
  int peak = *std::max_element(counts.begin(), counts.end());
  const double w = 720, h = 420, ml = 50, mr = 20, mt = 40, mb = 40;
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  double bw = (w - ml - mr) / bins;
  for (int b = 0; b < bins; ++b) {
    double bh = (h - mt - mb) * counts[static_cast<std::size_t>(b)] / std::max(1, peak);
    out << "<rect x='" << ml + b * bw << "' y='" << h - mb - bh << "' width='" << bw * 0.9
        << "' height='" << bh << "' fill='#1f77b4'/>\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", lo);
  out << "<text x='" << ml << "' y='" << h - mb + 16 << "' font-size='11'>" << buf
      << "</text>\n";
  std::snprintf(buf, sizeof buf, "%.3g", hi);
  out << "<text x='" << w - mr - 30 << "' y='" << h - mb + 16 << "' font-size='11'>" << buf
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace imltool
