#pragma once

// Standalone SVG figures.

#include <string>
#include <vector>

#include "cdm/matrix.hpp"

namespace cdm::eval {

struct ScatterSeries {
  std::string label;
  Mat points;  // (n x 2); extra columns are ignored
  std::string color = "#1f77b4";
};

std::string scatter_svg(const std::vector<ScatterSeries>& series, const std::string& title, int size = 480);

struct LineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

// Log-log axes when `log_axes` is set; non-positive values are dropped.
std::string line_svg(const std::vector<LineSeries>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label, bool log_axes, int width = 560, int height = 400);

}  // namespace cdm::eval
