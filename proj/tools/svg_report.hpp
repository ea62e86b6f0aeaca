#pragma once

#include <string>
#include <vector>

namespace gridfreq {

// One plot's worth of simulator traces: a shared time axis and a frequency
// series per monitored bus.
struct TracePanel {
  std::string title;
  std::vector<double> t;
  std::vector<int> buses;
  std::vector<std::vector<double>> freq;  // [bus index][step], Hz
};

// Side-by-side frequency plots on a shared vertical scale, with the nadir
// floor drawn across both. Returns a complete standalone SVG document.
std::string render_two_panel_svg(const TracePanel& left, const TracePanel& right,
                                 double nadir_limit_hz);

}  // namespace gridfreq
