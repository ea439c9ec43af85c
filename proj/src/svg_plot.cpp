#include "pepo/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pepo {

namespace {

constexpr double kWidth = 720.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 24.0, kTop = 40.0, kBottom = 56.0;
constexpr double kLogFloor = 1e-12;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

double tx(double v, double lo, double hi) {
  return kLeft + (v - lo) / (hi - lo) * (kWidth - kLeft - kRight);
}
double ty(double v, double lo, double hi) {
  return kHeight - kBottom - (v - lo) / (hi - lo) * (kHeight - kTop - kBottom);
}

std::string fmt_tick(double v) {
  std::ostringstream os;
  if (std::abs(v) >= 1e4 || (std::abs(v) < 1e-3 && v != 0.0)) {
    os.precision(1);
    os << std::scientific << v;
  } else {
    os.precision(6);
    os << v;
  }
  return os.str();
}

}  // namespace

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& xlabel, const std::string& ylabel,
                         const std::vector<PlotSeries>& series, bool log_x,
                         bool log_y) {
  auto mapx = [&](double v) { return log_x ? std::log10(std::max(v, kLogFloor)) : v; };
  auto mapy = [&](double v) { return log_y ? std::log10(std::max(v, kLogFloor)) : v; };

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, mapx(s.x[i]));
      x_hi = std::max(x_hi, mapx(s.x[i]));
      const double e = i < s.yerr.size() ? s.yerr[i] : 0.0;
      y_lo = std::min(y_lo, mapy(s.y[i] - e));
      y_hi = std::max(y_hi, mapy(s.y[i] + e));
    }
  }
  if (!std::isfinite(x_lo) || !std::isfinite(y_lo)) {
    x_lo = 0.0;
    x_hi = 1.0;
    y_lo = 0.0;
    y_hi = 1.0;
  }
  if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
  const double pad = 0.04 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_line_plot_svg: cannot open " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // axes frame
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\""
     << kWidth - kLeft - kRight << "\" height=\"" << kHeight - kTop - kBottom
     << "\" fill=\"none\" stroke=\"#333\"/>\n";

  // ticks: 5 per axis on the transformed scale
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    const double px = tx(fx, x_lo, x_hi);
    const double py = ty(fy, y_lo, y_hi);
    const double x_val = log_x ? std::pow(10.0, fx) : fx;
    const double y_val = log_y ? std::pow(10.0, fy) : fy;
    os << "<line x1=\"" << px << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << px
       << "\" y2=\"" << kHeight - kBottom + 5 << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << px << "\" y=\"" << kHeight - kBottom + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt_tick(x_val) << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py << "\" x2=\"" << kLeft
       << "\" y2=\"" << py << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << py + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt_tick(y_val) << "</text>\n";
  }
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << kHeight / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
     << "transform=\"rotate(-90 18 " << kHeight / 2 << ")\">" << ylabel << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!s.yerr.empty()) {
      std::ostringstream band;
      for (size_t i = 0; i < s.x.size(); ++i) {
        band << tx(mapx(s.x[i]), x_lo, x_hi) << ','
             << ty(mapy(s.y[i] + s.yerr[i]), y_lo, y_hi) << ' ';
      }
      for (size_t i = s.x.size(); i-- > 0;) {
        band << tx(mapx(s.x[i]), x_lo, x_hi) << ','
             << ty(mapy(s.y[i] - s.yerr[i]), y_lo, y_hi) << ' ';
      }
      os << "<polygon points=\"" << band.str() << "\" fill=\"" << color
         << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
    std::ostringstream line;
    for (size_t i = 0; i < s.x.size(); ++i) {
      line << tx(mapx(s.x[i]), x_lo, x_hi) << ',' << ty(mapy(s.y[i]), y_lo, y_hi) << ' ';
    }
    os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.8\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      os << "<circle cx=\"" << tx(mapx(s.x[i]), x_lo, x_hi) << "\" cy=\""
         << ty(mapy(s.y[i]), y_lo, y_hi) << "\" r=\"2.6\" fill=\"" << color << "\"/>\n";
    }
    // legend entry
    const double ly = kTop + 16.0 + 18.0 * static_cast<double>(si);
    os << "<line x1=\"" << kWidth - kRight - 150 << "\" y1=\"" << ly << "\" x2=\""
       << kWidth - kRight - 126 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 120 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw std::runtime_error("write_line_plot_svg: write failed for " + path);
}

}  // namespace pepo
