#include "svg_report.hpp"

#include <algorithm>
#include <cmath>

#include "gridfreq/common.hpp"

namespace gridfreq {

namespace {

// Distinguishable line colors, one per monitored bus; cycled if a network
// ever monitors more than ten.
const char* const kPalette[] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
};
constexpr size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

constexpr double kPlotW = 480.0, kPlotH = 380.0;
constexpr double kMarginLeft = 60.0, kMarginTop = 50.0;
constexpr double kPanelGap = 90.0, kMarginRight = 30.0, kLegendStrip = 46.0;
constexpr double kMarginBottom = 46.0;

struct Range {
  double lo, hi;
  double place(double v, double span) const {
    return (v - lo) / (hi - lo) * span;
  }
};

void check_panel(const TracePanel& p) {
  if (p.t.size() < 2) throw Error("trace panel needs at least two time steps");
  if (p.freq.size() != p.buses.size())
    throw Error("trace panel series do not match its bus list");
  for (const auto& s : p.freq)
    if (s.size() != p.t.size())
      throw Error("trace panel series disagree on step count");
}

void absorb(const TracePanel& p, double& lo, double& hi) {
  for (const auto& s : p.freq) {
    lo = std::min(lo, *std::min_element(s.begin(), s.end()));
    hi = std::max(hi, *std::max_element(s.begin(), s.end()));
  }
}

std::string num(double v) {
  std::string s = format_str("%.2f", v);
  return s == "-0.00" ? "0.00" : s;
}

void draw_panel(std::string& svg, const TracePanel& p, double x0, double y0,
                const Range& xr, const Range& yr, double nadir_limit) {
  svg += format_str(
      "<text x=\"%s\" y=\"%s\" text-anchor=\"middle\" font-size=\"15\" "
      "fill=\"#222\">%s</text>\n",
      num(x0 + kPlotW / 2).c_str(), num(y0 - 14.0).c_str(), p.title.c_str());
  svg += format_str(
      "<rect x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" fill=\"#fcfcfc\" "
      "stroke=\"#333\" stroke-width=\"1\"/>\n",
      num(x0).c_str(), num(y0).c_str(), num(kPlotW).c_str(), num(kPlotH).c_str());

  for (int i = 0; i <= 5; ++i) {
    const double fx = x0 + kPlotW * i / 5.0;
    const double tv = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    svg += format_str(
        "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#ddd\"/>\n",
        num(fx).c_str(), num(y0).c_str(), num(fx).c_str(),
        num(y0 + kPlotH).c_str());
    svg += format_str(
        "<text x=\"%s\" y=\"%s\" text-anchor=\"middle\" font-size=\"11\" "
        "fill=\"#444\">%.0f</text>\n",
        num(fx).c_str(), num(y0 + kPlotH + 16.0).c_str(), tv);
  }
  for (int i = 0; i <= 5; ++i) {
    const double fy = y0 + kPlotH - kPlotH * i / 5.0;
    const double fv = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    svg += format_str(
        "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#ddd\"/>\n",
        num(x0).c_str(), num(fy).c_str(), num(x0 + kPlotW).c_str(),
        num(fy).c_str());
    svg += format_str(
        "<text x=\"%s\" y=\"%s\" text-anchor=\"end\" font-size=\"11\" "
        "fill=\"#444\">%.2f</text>\n",
        num(x0 - 6.0).c_str(), num(fy + 4.0).c_str(), fv);
  }
  svg += format_str(
      "<text x=\"%s\" y=\"%s\" text-anchor=\"middle\" font-size=\"12\" "
      "fill=\"#222\">t [s]</text>\n",
      num(x0 + kPlotW / 2).c_str(), num(y0 + kPlotH + 34.0).c_str());
  svg += format_str(
      "<text x=\"%s\" y=\"%s\" text-anchor=\"middle\" font-size=\"12\" "
      "fill=\"#222\" transform=\"rotate(-90 %s %s)\">f [Hz]</text>\n",
      num(x0 - 42.0).c_str(), num(y0 + kPlotH / 2).c_str(),
      num(x0 - 42.0).c_str(), num(y0 + kPlotH / 2).c_str());

  if (nadir_limit > yr.lo && nadir_limit < yr.hi) {
    const double fy = y0 + kPlotH - yr.place(nadir_limit, kPlotH);
    svg += format_str(
        "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#c0392b\" "
        "stroke-width=\"1.2\" stroke-dasharray=\"6 4\"/>\n",
        num(x0).c_str(), num(fy).c_str(), num(x0 + kPlotW).c_str(),
        num(fy).c_str());
    svg += format_str(
        "<text x=\"%s\" y=\"%s\" text-anchor=\"start\" font-size=\"10\" "
        "fill=\"#c0392b\">limit %.2f</text>\n",
        num(x0 + 4.0).c_str(), num(fy - 4.0).c_str(), nadir_limit);
  }

  for (size_t b = 0; b < p.freq.size(); ++b) {
    std::string pts;
    // Every fourth sample keeps the polyline compact without visible loss
    // at plot resolution; the last sample always lands.
    for (size_t i = 0; i < p.t.size(); i += 4) {
      pts += format_str("%s,%s ", num(x0 + xr.place(p.t[i], kPlotW)).c_str(),
                        num(y0 + kPlotH - yr.place(p.freq[b][i], kPlotH)).c_str());
    }
    pts += format_str(
        "%s,%s", num(x0 + xr.place(p.t.back(), kPlotW)).c_str(),
        num(y0 + kPlotH - yr.place(p.freq[b].back(), kPlotH)).c_str());
    svg += format_str(
        "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" "
        "stroke-width=\"1.2\"/>\n",
        pts.c_str(), kPalette[b % kPaletteSize]);
  }
}

}  // namespace

std::string render_two_panel_svg(const TracePanel& left, const TracePanel& right,
                                 double nadir_limit_hz) {
  check_panel(left);
  check_panel(right);

  double lo = nadir_limit_hz, hi = 60.0;
  absorb(left, lo, hi);
  absorb(right, lo, hi);
  const double pad = std::max(0.02, (hi - lo) * 0.06);
  const Range yr{lo - pad, hi + pad};
  const Range xl{left.t.front(), left.t.back()};
  const Range xrr{right.t.front(), right.t.back()};

  const double width = kMarginLeft + kPlotW + kPanelGap + kPlotW + kMarginRight;
  const double height = kMarginTop + kPlotH + kMarginBottom + kLegendStrip;

  std::string svg = format_str(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" "
      "height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\">\n",
      width, height, width, height);
  svg += format_str(
      "<rect x=\"0\" y=\"0\" width=\"%.0f\" height=\"%.0f\" fill=\"white\"/>\n",
      width, height);

  draw_panel(svg, left, kMarginLeft, kMarginTop, xl, yr, nadir_limit_hz);
  draw_panel(svg, right, kMarginLeft + kPlotW + kPanelGap, kMarginTop, xrr, yr,
             nadir_limit_hz);

  // One legend strip for both panels; the bus sets are the same run.
  double lx = kMarginLeft;
  const double ly = kMarginTop + kPlotH + kMarginBottom + 18.0;
  for (size_t b = 0; b < left.buses.size(); ++b) {
    svg += format_str(
        "<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"%s\" "
        "stroke-width=\"2.5\"/>\n",
        num(lx).c_str(), num(ly - 4.0).c_str(), num(lx + 18.0).c_str(),
        num(ly - 4.0).c_str(), kPalette[b % kPaletteSize]);
    svg += format_str(
        "<text x=\"%s\" y=\"%s\" font-size=\"11\" fill=\"#222\">bus %d</text>\n",
        num(lx + 22.0).c_str(), num(ly).c_str(), left.buses[b]);
    lx += 96.0;
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace gridfreq
