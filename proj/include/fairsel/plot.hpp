#pragma once

#include <string>
#include <vector>

namespace fairsel {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // symmetric error bar half-widths; empty for none
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

// Static SVG line chart with markers and optional error bars. Output depends
// only on the input values (fixed number formatting, no timestamps).
std::string render_svg(const LinePlot& plot);

}  // namespace fairsel
