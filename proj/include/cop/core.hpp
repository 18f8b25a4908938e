#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace cop {

using Vec3 = std::array<double, 3>;

inline bool finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

// Row-major interleaved pixel storage: data[(y*width + x)*3 + c].
// Shared by the sRGB and lab image types below; height*width >= 1 always.
struct PixelGrid {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  PixelGrid() = default;
  PixelGrid(int h, int w) : height(h), width(w) {
    if (h < 1 || w < 1)
      throw std::invalid_argument("image dimensions must be >= 1");
    data.assign(static_cast<size_t>(h) * w * 3, 0.0);
  }

  int pixel_count() const { return height * width; }

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }

  Vec3 pixel(int y, int x) const {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set_pixel(int y, int x, const Vec3& v) {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    data[i] = v[0];
    data[i + 1] = v[1];
    data[i + 2] = v[2];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const PixelGrid& o) const {
    return height == o.height && width == o.width;
  }
};

// sRGB image, channel values in [0,1].
struct Image : PixelGrid {
  using PixelGrid::PixelGrid;
};

// Decorrelated lab image, channel values unbounded.
struct LabImage : PixelGrid {
  using PixelGrid::PixelGrid;
};

// Shortest round-trippable decimal form, for deterministic text output.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer the shorter %.15g / %.16g form when it round-trips
  for (int prec = 15; prec <= 16; ++prec) {
    char s[40];
    std::snprintf(s, sizeof(s), "%.*g", prec, v);
    if (std::strtod(s, nullptr) == v) return s;
  }
  return buf;
}

}  // namespace cop
