#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace gmmem::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = true;
  bool markers = false;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

}  // namespace detail

/// Renders panels on a grid with `columns` panels per row. Non-finite points
/// are skipped and break the polyline.
inline std::string render(const std::vector<Panel>& panels, int columns, const std::string& title) {
  using detail::px;
  const double pw = 420, ph = 300, ml = 62, mr = 16, mt = 34, mb = 46, top = 36;
  columns = std::max(1, columns);
  const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) / static_cast<std::size_t>(columns));
  std::ostringstream os;
  const double width = pw * columns, height = top + ph * std::max(rows, 1);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width) << "\" height=\"" << px(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << px(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << detail::escape(title) << "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double ox = pw * static_cast<double>(p % static_cast<std::size_t>(columns));
    const double oy = top + ph * static_cast<double>(p / static_cast<std::size_t>(columns));
    const double x0 = ox + ml, x1 = ox + pw - mr, y0 = oy + ph - mb, y1 = oy + mt;

    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : panel.series)
      for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto sx = [&](double v) { return x0 + (v - xmin) / (xmax - xmin) * (x1 - x0); };
    auto sy = [&](double v) { return y0 - (v - ymin) / (ymax - ymin) * (y0 - y1); };

    os << "<g>\n<rect x=\"" << px(x0) << "\" y=\"" << px(y1) << "\" width=\"" << px(x1 - x0) << "\" height=\""
       << px(y0 - y1) << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double xv = xmin + (xmax - xmin) * t / 4.0, yv = ymin + (ymax - ymin) * t / 4.0;
      os << "<text x=\"" << px(sx(xv)) << "\" y=\"" << px(y0 + 14) << "\" text-anchor=\"middle\">" << detail::num(xv)
         << "</text>\n";
      os << "<text x=\"" << px(x0 - 4) << "\" y=\"" << px(sy(yv) + 4) << "\" text-anchor=\"end\">" << detail::num(yv)
         << "</text>\n";
      os << "<line x1=\"" << px(x0) << "\" x2=\"" << px(x1) << "\" y1=\"" << px(sy(yv)) << "\" y2=\"" << px(sy(yv))
         << "\" stroke=\"#eee\"/>\n";
    }
    os << "<text x=\"" << px((x0 + x1) / 2) << "\" y=\"" << px(oy + 18) << "\" text-anchor=\"middle\" font-size=\"12\">"
       << detail::escape(panel.title) << "</text>\n";
    os << "<text x=\"" << px((x0 + x1) / 2) << "\" y=\"" << px(y0 + 32) << "\" text-anchor=\"middle\">"
       << detail::escape(panel.x_label) << "</text>\n";
    os << "<text transform=\"translate(" << px(ox + 14) << "," << px((y0 + y1) / 2)
       << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape(panel.y_label) << "</text>\n";

    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const Series& s = panel.series[k];
      const char* c = detail::colour(k);
      if (s.line) {
        std::string path;
        bool pen = false;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
          if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
            pen = false;
            continue;
          }
          path += (pen ? " L" : " M") + px(sx(s.x[i])) + " " + px(sy(s.y[i]));
          pen = true;
        }
        if (!path.empty()) {
          os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\"/>\n";
        }
      }
      if (s.markers) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
          if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
          os << "<circle cx=\"" << px(sx(s.x[i])) << "\" cy=\"" << px(sy(s.y[i])) << "\" r=\"2.5\" fill=\"" << c
             << "\"/>\n";
        }
      }
      const double ly = y1 + 12 + 13 * static_cast<double>(k);
      os << "<line x1=\"" << px(x1 - 110) << "\" x2=\"" << px(x1 - 94) << "\" y1=\"" << px(ly - 4) << "\" y2=\""
         << px(ly - 4) << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << px(x1 - 90) << "\" y=\"" << px(ly) << "\">" << detail::escape(s.label) << "</text>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace gmmem::svg
