#pragma once

#include <string>
#include <vector>

namespace pepo {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> yerr;  // half-width of the shaded band; may be empty
};

// Self-contained SVG line plot: one polyline per series, shaded +-yerr bands,
// log or linear axes, small legend. No external plotting dependency.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& xlabel, const std::string& ylabel,
                         const std::vector<PlotSeries>& series, bool log_x,
                         bool log_y);

}  // namespace pepo
