#pragma once

#include <string>
#include <vector>

namespace dcs {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line plot; no external renderer needed. With log_y the
// y-axis is log10-scaled with ticks at decade marks and nonpositive values
// are skipped.
void write_svg_plot(const std::vector<SvgSeries>& series,
                    const std::string& x_label, const std::string& y_label,
                    bool log_y, const std::string& path);

}  // namespace dcs
