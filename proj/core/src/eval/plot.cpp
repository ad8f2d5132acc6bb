#include "cdm/eval/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cdm/error.hpp"

namespace cdm::eval {
namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

std::string scatter_svg(const std::vector<ScatterSeries>& series, const std::string& title, int size) {
  Range r;
  for (const auto& s : series) {
    if (s.points.cols() < 2) throw DimensionError("scatter_svg: points need two columns");
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
      r.add(s.points(i, 0));
      r.add(s.points(i, 1));
    }
  }
  r.pad();
  const double margin = 40.0;
  const double span = size - 2 * margin;
  auto px = [&](double v) { return margin + (v - r.lo) / (r.hi - r.lo) * span; };
  auto py = [&](double v) { return size - margin - (v - r.lo) / (r.hi - r.lo) * span; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << size / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << span << "\" height=\"" << span
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"" << size - 10 << "\" font-size=\"10\">" << fmt(r.lo) << "</text>\n";
  out << "<text x=\"" << size - margin << "\" y=\"" << size - 10 << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(r.hi) << "</text>\n";
  int legend_y = 50;
  for (const auto& s : series) {
    out << "<g fill=\"" << escape(s.color) << "\" fill-opacity=\"0.5\">\n";
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
      if (!std::isfinite(s.points(i, 0)) || !std::isfinite(s.points(i, 1))) continue;
      out << "<circle cx=\"" << fmt(px(s.points(i, 0))) << "\" cy=\"" << fmt(py(s.points(i, 1))) << "\" r=\"1.5\"/>\n";
    }
    out << "</g>\n";
    out << "<text x=\"" << margin + 6 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\"" << escape(s.color)
        << "\">" << escape(s.label) << "</text>\n";
    legend_y += 14;
  }
  out << "</svg>\n";
  return out.str();
}

std::string line_svg(const std::vector<LineSeries>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label, bool log_axes, int width, int height) {
  auto tx = [&](double v) { return log_axes ? std::log10(v) : v; };
  auto keep = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_axes || (x > 0.0 && y > 0.0));
  };
  Range rx, ry;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("line_svg: x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!keep(s.x[i], s.y[i])) continue;
      rx.add(tx(s.x[i]));
      ry.add(tx(s.y[i]));
    }
  }
  rx.pad();
  ry.pad();
  const double m = 50.0;
  auto px = [&](double v) { return m + (tx(v) - rx.lo) / (rx.hi - rx.lo) * (width - 2 * m); };
  auto py = [&](double v) { return height - m - (tx(v) - ry.lo) / (ry.hi - ry.lo) * (height - 2 * m); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  out << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << width - 2 * m << "\" height=\"" << height - 2 * m
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  const std::string suffix = log_axes ? " (log10)" : "";
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << escape(x_label + suffix) << "</text>\n";
  out << "<text x=\"14\" y=\"" << height / 2 << "\" font-size=\"11\" transform=\"rotate(-90 14 " << height / 2
      << ")\" text-anchor=\"middle\">" << escape(y_label + suffix) << "</text>\n";
  out << "<text x=\"" << m << "\" y=\"" << height - m + 14 << "\" font-size=\"10\">" << fmt(rx.lo) << "</text>\n";
  out << "<text x=\"" << width - m << "\" y=\"" << height - m + 14 << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(rx.hi) << "</text>\n";
  int legend_y = static_cast<int>(m) + 14;
  for (const auto& s : series) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (keep(s.x[i], s.y[i])) pts << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
    out << "<polyline fill=\"none\" stroke=\"" << escape(s.color) << "\" stroke-width=\"1.5\" points=\"" << pts.str()
        << "\"/>\n";
    out << "<text x=\"" << m + 8 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\"" << escape(s.color) << "\">"
        << escape(s.label) << "</text>\n";
    legend_y += 14;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace cdm::eval
