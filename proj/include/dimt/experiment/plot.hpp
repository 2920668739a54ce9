#pragma once

// Static SVG line and bar charts. Every chart is written with a JSON twin
// holding the plotted numbers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dimt/core/jsonio.hpp"

namespace dimt::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

struct BarGroup {
  std::string name;
  std::vector<double> values;  // one per category; NaN draws no bar
};

struct BarChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<BarGroup> groups;
};

namespace detail {

inline constexpr int kWidth = 640;
inline constexpr int kHeight = 400;
inline constexpr int kLeft = 70;
inline constexpr int kRight = 150;
inline constexpr int kTop = 40;
inline constexpr int kBottom = 60;
inline constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

struct Range {
  double lo = 0, hi = 1;
  void include(double v) {
    if (!std::isfinite(v)) return;
    if (empty) {
      lo = hi = v;
      empty = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void settle() {
    if (empty) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(hi) * 0.05, 0.5);
      lo -= pad;
      hi += pad;
    }
  }
  bool empty = true;
};

inline double map(double v, const Range& r, double a, double b) { return a + (v - r.lo) / (r.hi - r.lo) * (b - a); }

inline void frame(std::ostringstream& os, const std::string& title, const std::string& xl, const std::string& yl,
                  const Range& y) {
  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = map(v, y, kTop + ph, kTop);
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << py << "\" x2=\"" << kLeft << "\" y2=\"" << py
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\">" << escape(xl)
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << kTop + ph / 2 << ")\">" << escape(yl) << "</text>\n";
}

inline void legend(std::ostringstream& os, const std::vector<std::string>& names) {
  const int x = kWidth - kRight + 15;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const int y = kTop + 10 + static_cast<int>(i) * 18;
    os << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\"" << kColors[i % 6]
       << "\"/>\n";
    os << "<text x=\"" << x + 18 << "\" y=\"" << y << "\">" << escape(names[i]) << "</text>\n";
  }
}

}  // namespace detail

inline std::string render_svg(const LineChart& c) {
  using namespace detail;
  Range xr, yr;
  for (const auto& s : c.series) {
    for (double v : s.x) xr.include(v);
    for (double v : s.y) yr.include(v);
  }
  xr.settle();
  yr.settle();
  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::ostringstream os;
  frame(os, c.title, c.x_label, c.y_label, yr);
  for (int i = 0; i <= 4; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double px = map(v, xr, kLeft, kLeft + pw);
    os << "<text x=\"" << px << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << num(v) << "</text>\n";
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < c.series.size(); ++k) {
    const auto& s = c.series[k];
    names.push_back(s.name);
    std::ostringstream pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double px = map(s.x[i], xr, kLeft, kLeft + pw), py = map(s.y[i], yr, kTop + ph, kTop);
      pts << px << ',' << py << ' ';
      os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\"" << kColors[k % 6] << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << kColors[k % 6] << "\" stroke-width=\"1.5\" points=\"" << pts.str()
       << "\"/>\n";
  }
  legend(os, names);
  os << "</svg>\n";
  return os.str();
}

inline std::string render_svg(const BarChart& c) {
  using namespace detail;
  Range yr;
  yr.include(0.0);
  for (const auto& g : c.groups)
    for (double v : g.values) yr.include(v);
  yr.settle();
  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::ostringstream os;
  frame(os, c.title, c.x_label, c.y_label, yr);
  const double slot = c.categories.empty() ? pw : static_cast<double>(pw) / static_cast<double>(c.categories.size());
  const double bar = slot * 0.8 / static_cast<double>(std::max<std::size_t>(1, c.groups.size()));
  const double base = map(0.0, yr, kTop + ph, kTop);
  for (std::size_t i = 0; i < c.categories.size(); ++i) {
    const double x0 = kLeft + slot * static_cast<double>(i) + slot * 0.1;
    os << "<text x=\"" << x0 + slot * 0.4 << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
       << escape(c.categories[i]) << "</text>\n";
    for (std::size_t k = 0; k < c.groups.size(); ++k) {
      const double v = i < c.groups[k].values.size() ? c.groups[k].values[i] : std::nan("");
      if (!std::isfinite(v)) continue;
      const double top = map(v, yr, kTop + ph, kTop);
      os << "<rect x=\"" << x0 + bar * static_cast<double>(k) << "\" y=\"" << std::min(top, base) << "\" width=\""
         << bar << "\" height=\"" << std::abs(base - top) << "\" fill=\"" << kColors[k % 6] << "\"/>\n";
    }
  }
  std::vector<std::string> names;
  for (const auto& g : c.groups) names.push_back(g.name);
  legend(os, names);
  os << "</svg>\n";
  return os.str();
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const LineChart& c) {
  Json series = Json::array();
  for (const auto& s : c.series) {
    Json ys = Json::array();
    for (double v : s.y) ys.push_back(finite_or_null(v));
    series.push_back({{"name", s.name}, {"x", s.x}, {"y", ys}});
  }
  return Json{{"kind", "line"}, {"title", c.title}, {"x_label", c.x_label}, {"y_label", c.y_label}, {"series", series}};
}

inline Json to_json(const BarChart& c) {
  Json groups = Json::array();
  for (const auto& g : c.groups) {
    Json vs = Json::array();
    for (double v : g.values) vs.push_back(finite_or_null(v));
    groups.push_back({{"name", g.name}, {"values", vs}});
  }
  return Json{{"kind", "bar"},         {"title", c.title},           {"x_label", c.x_label},
              {"y_label", c.y_label},  {"categories", c.categories}, {"groups", groups}};
}

/// Writes `<stem>.svg` and `<stem>.json`.
template <class Chart>
void write_chart(const std::filesystem::path& stem, const Chart& c) {
  write_text_file(std::filesystem::path(stem.string() + ".svg"), render_svg(c));
  write_json_file(std::filesystem::path(stem.string() + ".json"), to_json(c));
}

}  // namespace dimt::plot
