#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "baseplace/image.hpp"

namespace baseplace::draw {

inline Rgb blend(Rgb a, Rgb b, double t) {
  auto mix = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround((1.0 - t) * x + t * y));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

inline void disc(Image& img, double cx, double cy, double radius, Rgb color) {
  const int x0 = static_cast<int>(std::floor(cx - radius)), x1 = static_cast<int>(std::ceil(cx + radius));
  const int y0 = static_cast<int>(std::floor(cy - radius)), y1 = static_cast<int>(std::ceil(cy + radius));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= radius * radius) img.put(x, y, color);
    }
}

/// Thick segment: every pixel whose center is within `half_width` of it.
inline void line(Image& img, double x0, double y0, double x1, double y1, double half_width, Rgb color) {
  const int xa = static_cast<int>(std::floor(std::min(x0, x1) - half_width));
  const int xb = static_cast<int>(std::ceil(std::max(x0, x1) + half_width));
  const int ya = static_cast<int>(std::floor(std::min(y0, y1) - half_width));
  const int yb = static_cast<int>(std::ceil(std::max(y0, y1) + half_width));
  const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
  for (int y = ya; y <= yb; ++y)
    for (int x = xa; x <= xb; ++x) {
      double px = x + 0.5 - x0, py = y + 0.5 - y0;
      double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
      double ex = px - t * dx, ey = py - t * dy;
      if (ex * ex + ey * ey <= half_width * half_width) img.put(x, y, color);
    }
}

// 3x5 glyphs, one row per entry, bit 2 = leftmost column.
inline const std::array<std::uint8_t, 5>* glyph(char c) {
  static constexpr std::array<std::array<std::uint8_t, 5>, 11> kGlyphs = {{
      {7, 5, 5, 5, 7},  // 0
      {2, 6, 2, 2, 7},  // 1
      {7, 1, 7, 4, 7},  // 2
      {7, 1, 7, 1, 7},  // 3
      {5, 5, 7, 1, 1},  // 4
      {7, 4, 7, 1, 7},  // 5
      {7, 4, 7, 5, 7},  // 6
      {7, 1, 1, 1, 1},  // 7
      {7, 5, 7, 5, 7},  // 8
      {7, 5, 7, 1, 7},  // 9
      {2, 5, 7, 5, 5},  // A
  }};
  if (c >= '0' && c <= '9') return &kGlyphs[static_cast<std::size_t>(c - '0')];
  if (c == 'A') return &kGlyphs[10];
  return nullptr;
}

/// Text centered on (cx, cy); each glyph cell is `scale` pixels.
inline void text(Image& img, double cx, double cy, std::string_view s, int scale, Rgb color) {
  const int advance = 4 * scale;
  const int total = static_cast<int>(s.size()) * advance - scale;
  int left = static_cast<int>(std::lround(cx - total / 2.0));
  int top = static_cast<int>(std::lround(cy - 2.5 * scale));
  for (char c : s) {
    if (const auto* g = glyph(c)) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if ((*g)[static_cast<std::size_t>(row)] & (4 >> col))
            for (int sy = 0; sy < scale; ++sy)
              for (int sx = 0; sx < scale; ++sx) img.put(left + col * scale + sx, top + row * scale + sy, color);
    }
    left += advance;
  }
}

}  // namespace baseplace::draw
