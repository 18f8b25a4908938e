#pragma once

#include <algorithm>
#include <vector>

#include "cop/core.hpp"

namespace cop {

inline constexpr int kGridH = 16;
inline constexpr int kGridW = 8;
inline constexpr int kGridFeatures = kGridH * kGridW * 3;  // 384

// Mean-pool an image onto a fixed gh x gw grid and flatten to
// (gy * gw + gx) * 3 + c order. Cells always cover at least one pixel,
// so images smaller than the grid are handled by duplication.
inline std::vector<double> pool_to_grid(const Image& img, int gh = kGridH,
                                        int gw = kGridW) {
  std::vector<double> out(static_cast<size_t>(gh) * gw * 3, 0.0);
  for (int gy = 0; gy < gh; ++gy) {
    int y0 = std::min(gy * img.height / gh, img.height - 1);
    int y1 = std::clamp((gy + 1) * img.height / gh, y0 + 1, img.height);
    for (int gx = 0; gx < gw; ++gx) {
      int x0 = std::min(gx * img.width / gw, img.width - 1);
      int x1 = std::clamp((gx + 1) * img.width / gw, x0 + 1, img.width);
      double sum[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < 3; ++c) sum[c] += img.at(y, x, c);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < 3; ++c)
        out[(static_cast<size_t>(gy) * gw + gx) * 3 + c] = sum[c] / n;
    }
  }
  return out;
}

}  // namespace cop
