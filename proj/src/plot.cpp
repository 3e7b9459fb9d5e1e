// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "discover/errors.hpp"
#include "discover/evaluation.hpp"

namespace discover {
namespace {

using Glyph = std::array<const char*, 7>;

// 5x7 bitmap glyphs; lowercase letters render as uppercase.
const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs = {
      {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
      {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
      {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
      {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
      {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
      {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
      {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
      {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
      {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
      {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'D', {"###  ", "#  # ", "#   #", "#   #", "#   #", "#  # ", "###  "}},
      {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
      {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'J', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
      {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'N', {"#   #", "#   #", "##  #", "# # #", "#  ##", "#   #", "#   #"}},
      {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "}},
      {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
      {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
      {',', {"     ", "     ", "     ", "     ", " ##  ", "  #  ", " #   "}},
      {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
      {'+', {"     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "}},
      {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "#####"}},
      {'%', {"##   ", "##  #", "   # ", "  #  ", " #   ", "#  ##", "   ##"}},
      {'(', {"   # ", "  #  ", " #   ", " #   ", " #   ", "  #  ", "   # "}},
      {')', {" #   ", "  #  ", "   # ", "   # ", "   # ", "  #  ", " #   "}},
      {'/', {"     ", "    #", "   # ", "  #  ", " #   ", "#    ", "     "}},
      {':', {"     ", " ##  ", " ##  ", "     ", " ##  ", " ##  ", "     "}},
      {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
  };
  return glyphs;
}

struct Color {
  std::uint8_t r, g, b;
};

constexpr std::array<Color, 8> kPalette = {{{31, 119, 180},
                                            {214, 39, 40},
                                            {44, 160, 44},
                                            {255, 127, 14},
                                            {148, 103, 189},
                                            {140, 86, 75},
                                            {227, 119, 194},
                                            {23, 190, 207}}};

class Canvas {
 public:
  Canvas(int w, int h) {
    img_.width = w;
    img_.height = h;
    img_.pixels.assign(static_cast<std::size_t>(w) * h * 3, 255);
  }

  void set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    img_.at(x, y, 0) = c.r;
    img_.at(x, y, 1) = c.g;
    img_.at(x, y, 2) = c.b;
  }

  void fill(int x0, int y0, int x1, int y1, Color c) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set(x, y, c);
  }

  void line(double x0, double y0, double x1, double y1, Color c, int thickness = 1) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    const int r0 = -(thickness - 1) / 2, r1 = thickness / 2;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      for (int dy = r0; dy <= r1; ++dy)
        for (int dx = r0; dx <= r1; ++dx) set(x + dx, y + dy, c);
    }
  }

  static int text_width(const std::string& s, int scale) { return static_cast<int>(s.size()) * 6 * scale; }

  void text(int x, int y, const std::string& s, Color c, int scale = 1) {
    const auto& f = font();
    for (char ch : s) {
      const auto it = f.find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
      if (it != f.end()) {
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (it->second[row][col] == '#') fill(x + col * scale, y + row * scale, x + (col + 1) * scale, y + (row + 1) * scale, c);
      }
      x += 6 * scale;
    }
  }

  RgbImage take() { return std::move(img_); }

 private:
  RgbImage img_;
};

/// Tick step of the form {1, 2, 5} x 10^k giving about `target` ticks.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

std::string format_tick(double v, double step) {
  const int decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, std::abs(v) < step * 1e-6 ? 0.0 : v);
  return buf;
}

}  // namespace

RgbImage plot_rd(const std::vector<RDCurve>& curves, const PlotOptions& options) {
  if (curves.empty()) throw ValidationError("nothing to plot");
  if (options.width < 160 || options.height < 120) throw ValidationError("plot must be at least 160x120");
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  for (const auto& c : curves) {
    if (c.points.empty()) throw ValidationError("curve '" + c.codec_name + "' has no points");
    for (const auto& p : c.points) {
      if (!std::isfinite(p.bpp) || !std::isfinite(p.metric)) throw ValidationError("non-finite point in '" + c.codec_name + "'");
      x_lo = std::min(x_lo, p.bpp);
      x_hi = std::max(x_hi, p.bpp);
      y_lo = std::min(y_lo, p.metric);
      y_hi = std::max(y_hi, p.metric);
    }
  }
  auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  };
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);

  const Color black{0, 0, 0}, grid{225, 225, 225};
  Canvas cv(options.width, options.height);
  const int left = 70, right = options.width - 20, top = options.title.empty() ? 20 : 36, bottom = options.height - 44;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (right - left); };
  auto py = [&](double y) { return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top); };

  const double xs = nice_step(x_hi - x_lo, 6), ys = nice_step(y_hi - y_lo, 6);
  for (double v = std::ceil(x_lo / xs) * xs; v <= x_hi + 1e-12; v += xs) {
    const double x = px(v);
    cv.line(x, top, x, bottom, grid);
    cv.line(x, bottom, x, bottom + 4, black);
    const std::string s = format_tick(v, xs);
    cv.text(static_cast<int>(x) - Canvas::text_width(s, 1) / 2, bottom + 8, s, black);
  }
  for (double v = std::ceil(y_lo / ys) * ys; v <= y_hi + 1e-12; v += ys) {
    const double y = py(v);
    cv.line(left, y, right, y, grid);
    cv.line(left - 4, y, left, y, black);
    const std::string s = format_tick(v, ys);
    cv.text(left - 8 - Canvas::text_width(s, 1), static_cast<int>(y) - 3, s, black);
  }
  cv.line(left, top, left, bottom, black);
  cv.line(left, bottom, right, bottom, black);
  cv.text((left + right - Canvas::text_width("bpp", 1)) / 2, bottom + 24, "bpp", black);
  const std::string metric = curves.front().metric_name;
  cv.text(6, top - 12 < 0 ? 0 : top - 12, metric, black);
  if (!options.title.empty()) {
    cv.text((options.width - Canvas::text_width(options.title, 2)) / 2, 6, options.title, black, 2);
  }

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const Color col = kPalette[i % kPalette.size()];
    const auto& pts = curves[i].points;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      cv.line(px(pts[k].bpp), py(pts[k].metric), px(pts[k + 1].bpp), py(pts[k + 1].metric), col, 2);
    }
    for (const auto& p : pts) {
      const int x = static_cast<int>(std::lround(px(p.bpp))), y = static_cast<int>(std::lround(py(p.metric)));
      cv.fill(x - 3, y - 3, x + 4, y + 4, col);
    }
    const int ly = top + 8 + static_cast<int>(i) * 14;
    cv.fill(left + 10, ly, left + 22, ly + 7, col);
    cv.text(left + 28, ly, curves[i].codec_name, black);
  }
  return cv.take();
}

}  // namespace discover
