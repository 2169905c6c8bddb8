#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cotica/io.hpp"

namespace cotica {

// Self-contained SVG charts with a fixed deterministic layout; no plotting
// dependency. Good enough for line/bar/scatter reporting.

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline constexpr int kSvgW = 720;
inline constexpr int kSvgH = 480;
inline constexpr int kMarginL = 70, kMarginR = 160, kMarginT = 40, kMarginB = 55;

inline const char* svg_color(size_t i) {
  static constexpr const char* palette[] = {"#4878a8", "#e08214", "#2e8b57",
                                            "#c0392b", "#8e6bb8", "#5d6d7e"};
  return palette[i % 6];
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct SvgCanvas {
  std::string body;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  double px(double x) const {
    return kMarginL + (x - xmin) / (xmax - xmin) * (kSvgW - kMarginL - kMarginR);
  }
  double py(double y) const {
    return kSvgH - kMarginB - (y - ymin) / (ymax - ymin) * (kSvgH - kMarginT - kMarginB);
  }

  void fit(const std::vector<SvgSeries>& series) {
    bool any = false;
    for (const auto& s : series)
      for (auto [x, y] : s.points) {
        if (!any) {
          xmin = xmax = x;
          ymin = ymax = y;
          any = true;
        }
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    if (xmax == xmin) {
      xmin -= 0.5;
      xmax += 0.5;
    }
    if (ymax == ymin) {
      ymin -= 0.5;
      ymax += 0.5;
    }
    const double padx = 0.05 * (xmax - xmin), pady = 0.08 * (ymax - ymin);
    xmin -= padx;
    xmax += padx;
    ymin -= pady;
    ymax += pady;
  }

  static std::string escape(const std::string& t) {
    std::string out;
    for (char c : t) {
      if (c == '&') out += "&amp;";
      else if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else out += c;
    }
    return out;
  }

  void text(double x, double y, const std::string& t, int size = 12, bool bold = false) {
    body += "<text x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) +
            "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) + "\"" +
            (bold ? " font-weight=\"bold\"" : "") + ">" + escape(t) + "</text>\n";
  }

  void frame_and_axes(const std::string& title, const std::string& xlabel,
                      const std::string& ylabel) {
    body += "<rect x=\"" + svg_num(kMarginL) + "\" y=\"" + svg_num(kMarginT) + "\" width=\"" +
            svg_num(kSvgW - kMarginL - kMarginR) + "\" height=\"" +
            svg_num(kSvgH - kMarginT - kMarginB) +
            "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    text(kMarginL, kMarginT - 14, title, 15, true);
    text((kMarginL + kSvgW - kMarginR) / 2.0 - 20, kSvgH - 12, xlabel);
    text(14, kMarginT - 14, ylabel);
    for (int i = 0; i <= 4; ++i) {
      const double fy = ymin + (ymax - ymin) * i / 4.0;
      const double fx = xmin + (xmax - xmin) * i / 4.0;
      body += "<line x1=\"" + svg_num(kMarginL - 4) + "\" y1=\"" + svg_num(py(fy)) + "\" x2=\"" +
              svg_num(kSvgW - kMarginR) + "\" y2=\"" + svg_num(py(fy)) +
              "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
      text(8, py(fy) + 4, svg_num(fy));
      text(px(fx) - 10, kSvgH - kMarginB + 16, svg_num(fx));
    }
  }

  void legend(const std::vector<SvgSeries>& series) {
    for (size_t i = 0; i < series.size(); ++i) {
      const double y = kMarginT + 14 + 18.0 * static_cast<double>(i);
      body += "<rect x=\"" + svg_num(kSvgW - kMarginR + 12) + "\" y=\"" + svg_num(y - 9) +
              "\" width=\"12\" height=\"12\" fill=\"" + std::string(svg_color(i)) + "\"/>\n";
      text(kSvgW - kMarginR + 30, y + 2, series[i].name);
    }
  }

  std::string finish() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kSvgW) +
           "\" height=\"" + std::to_string(kSvgH) + "\">\n<rect width=\"100%\" height=\"100%\" "
           "fill=\"white\"/>\n" +
           body + "</svg>\n";
  }
};

}  // namespace detail

inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& xlabel, const std::string& ylabel,
                             const std::vector<SvgSeries>& series) {
  detail::SvgCanvas cv;
  cv.fit(series);
  cv.frame_and_axes(title, xlabel, ylabel);
  for (size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (auto [x, y] : series[i].points)
      pts += detail::svg_num(cv.px(x)) + "," + detail::svg_num(cv.py(y)) + " ";
    cv.body += "<polyline fill=\"none\" stroke=\"" + std::string(detail::svg_color(i)) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (auto [x, y] : series[i].points)
      cv.body += "<circle cx=\"" + detail::svg_num(cv.px(x)) + "\" cy=\"" +
                 detail::svg_num(cv.py(y)) + "\" r=\"3\" fill=\"" +
                 std::string(detail::svg_color(i)) + "\"/>\n";
  }
  cv.legend(series);
  detail::write_file(path, cv.finish());
}

inline void write_scatter_chart(const std::string& path, const std::string& title,
                                const std::string& xlabel, const std::string& ylabel,
                                const std::vector<SvgSeries>& series) {
  detail::SvgCanvas cv;
  cv.fit(series);
  cv.frame_and_axes(title, xlabel, ylabel);
  for (size_t i = 0; i < series.size(); ++i) {
    for (auto [x, y] : series[i].points)
      cv.body += "<circle cx=\"" + detail::svg_num(cv.px(x)) + "\" cy=\"" +
                 detail::svg_num(cv.py(y)) + "\" r=\"4\" fill=\"" +
                 std::string(detail::svg_color(i)) + "\" fill-opacity=\"0.8\"/>\n";
  }
  cv.legend(series);
  detail::write_file(path, cv.finish());
}

// Grouped bars: one group per category, one bar per series.
inline void write_bar_chart(const std::string& path, const std::string& title,
                            const std::string& ylabel,
                            const std::vector<std::string>& categories,
                            const std::vector<SvgSeries>& series) {
  detail::SvgCanvas cv;
  cv.fit(series);
  cv.xmin = -0.5;
  cv.xmax = static_cast<double>(categories.size()) - 0.5;
  cv.ymin = std::min(0.0, cv.ymin);
  cv.frame_and_axes(title, "", ylabel);
  const double group_w = 0.8;
  const double bar_w = group_w / std::max<size_t>(1, series.size());
  for (size_t i = 0; i < series.size(); ++i) {
    for (auto [x, y] : series[i].points) {
      const double left = x - group_w / 2 + bar_w * static_cast<double>(i);
      const double x0 = cv.px(left), x1 = cv.px(left + bar_w);
      const double y0 = cv.py(std::max(0.0, y)), y1 = cv.py(std::min(0.0, y));
      cv.body += "<rect x=\"" + detail::svg_num(x0) + "\" y=\"" + detail::svg_num(y0) +
                 "\" width=\"" + detail::svg_num(std::max(1.0, x1 - x0 - 1)) + "\" height=\"" +
                 detail::svg_num(std::max(0.5, y1 - y0)) + "\" fill=\"" +
                 std::string(detail::svg_color(i)) + "\"/>\n";
    }
  }
  for (size_t c = 0; c < categories.size(); ++c)
    cv.text(cv.px(static_cast<double>(c)) - 14, detail::kSvgH - detail::kMarginB + 16,
            categories[c]);
  cv.legend(series);
  detail::write_file(path, cv.finish());
}

}  // namespace cotica
