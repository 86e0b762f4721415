#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dsf {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// small hand-rolled line chart, enough for PR curves and sweep trends
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series);

}  // namespace dsf
