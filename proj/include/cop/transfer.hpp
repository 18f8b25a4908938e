#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cop/colorspace.hpp"
#include "cop/colorstats.hpp"
#include "cop/core.hpp"

namespace cop {

// Guard against division blow-up on (near-)constant channels.
inline constexpr double kStdFloor = 1e-4;

// Per-channel moment matching in lab space. No clamping here: the result
// matches the target moments exactly (when source stddevs are above the
// floor); range limits are applied only on conversion back to sRGB.
inline LabImage transfer_lab(const LabImage& src, const ColorStats& src_stats,
                             const ColorStats& tgt_stats) {
  if (!src_stats.is_finite() || !tgt_stats.is_finite())
    throw std::invalid_argument("transfer_lab: non-finite stats");
  LabImage out(src.height, src.width);
  Vec3 scale, shift;
  for (int c = 0; c < 3; ++c) {
    scale[c] = tgt_stats.stddev[c] / std::max(src_stats.stddev[c], kStdFloor);
    shift[c] = tgt_stats.mean[c];
  }
  const size_t n = src.data.size();
  for (size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    out.data[i] = (src.data[i] - src_stats.mean[c]) * scale[c] + shift[c];
  }
  return out;
}

inline LabImage transfer_lab(const LabImage& src,
                             const ColorStats& tgt_stats) {
  return transfer_lab(src, image_stats(src), tgt_stats);
}

// sRGB in, sRGB out; the round trip through lab is internal.
inline Image transfer_to_stats(const Image& src, const ColorStats& tgt_stats) {
  LabImage lab = srgb_to_lab(src);
  return lab_to_srgb(transfer_lab(lab, image_stats(lab), tgt_stats));
}

inline Image transfer_to_image(const Image& src, const Image& target) {
  LabImage tgt_lab = srgb_to_lab(target);
  return transfer_to_stats(src, image_stats(tgt_lab));
}

// Variant that estimates the source statistics from a border region only,
// so a dominant centered foreground does not skew the mapping. The mapping
// is still applied to every pixel.
inline Image object_agnostic_transfer(const Image& src,
                                      const ColorStats& tgt_stats,
                                      const Region& region) {
  LabImage src_lab = srgb_to_lab(src);
  ColorStats src_stats = image_stats(src_lab, region);
  return lab_to_srgb(transfer_lab(src_lab, src_stats, tgt_stats));
}

// Image-target convenience: the target statistics come from the same
// border region of the target image.
inline Image object_agnostic_transfer(const Image& src, const Image& target,
                                      const Region& region) {
  LabImage tgt_lab = srgb_to_lab(target);
  return object_agnostic_transfer(src, image_stats(tgt_lab, region), region);
}

}  // namespace cop
