#include "dcs/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dcs {

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 20.0, kBottom = 50.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_svg_plot(const std::vector<SvgSeries>& series,
                    const std::string& x_label, const std::string& y_label,
                    bool log_y, const std::string& path) {
  if (series.empty()) throw std::invalid_argument("write_svg_plot: no series");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw std::invalid_argument("write_svg_plot: empty or ragged series");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && s.y[i] <= 0.0) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      const double yv = log_y ? std::log10(s.y[i]) : s.y[i];
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  }
  if (!(xmin <= xmax) || !(ymin <= ymax))
    throw std::invalid_argument("write_svg_plot: no plottable points");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  if (log_y) {  // widen to whole decades so tick labels sit on powers of ten
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
    if (ymax == ymin) ymax += 1.0;
  }

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) {
    const double v = log_y ? std::log10(y) : y;
    return kTop + (ymax - v) / (ymax - ymin) * plot_h;
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_svg_plot: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";

  // y ticks: decades when log, 6 even steps otherwise
  const int y_ticks = log_y ? static_cast<int>(ymax - ymin) : 6;
  for (int k = 0; k <= y_ticks; ++k) {
    const double v = ymin + (ymax - ymin) * k / y_ticks;
    const double py = kTop + (ymax - v) / (ymax - ymin) * plot_h;
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << py << "\" x2=\""
        << kLeft + plot_w << "\" y2=\"" << py
        << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    const std::string label = log_y ? ("1e" + fmt(v)) : fmt(v);
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << label << "</text>\n";
  }
  for (int k = 0; k <= 6; ++k) {
    const double v = xmin + (xmax - xmin) * k / 6.0;
    const double px = sx(v);
    out << "<line x1=\"" << px << "\" y1=\"" << kTop + plot_h << "\" x2=\""
        << px << "\" y2=\"" << kTop + plot_h + 4 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(v)
        << "</text>\n";
  }
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << kTop + plot_h / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (log_y && series[s].y[i] <= 0.0) continue;
      out << fmt(sx(series[s].x[i])) << ',' << fmt(sy(series[s].y[i])) << ' ';
    }
    out << "\"/>\n";
    const double ly = kTop + 16 + 16 * static_cast<double>(s);
    out << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << ly
        << "\" x2=\"" << kLeft + plot_w - 130 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + plot_w - 124 << "\" y=\"" << ly + 4
        << "\" font-size=\"11\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace dcs
