#pragma once

#include <cmath>
#include <stdexcept>

#include "cop/core.hpp"

namespace cop {

using Mat3 = std::array<Vec3, 3>;

inline Vec3 mat_apply(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Mat3 mat_inverse(const Mat3& m) {
  double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-12)
    throw std::runtime_error("mat_inverse: singular matrix");
  double inv = 1.0 / det;
  Mat3 r;
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
  return r;
}

// Decorrelated log-compressed color space: sRGB -> LMS cone response ->
// log10 -> rotation that isolates an achromatic axis (l) and two chroma
// axes (alpha, beta). Channel statistics are near-independent here, which
// is what makes per-channel moment transfer work.
//
// Forward lab transform is diag(1/sqrt3, 1/sqrt6, 1/sqrt2) * [[1,1,1],
// [1,1,-2],[1,-1,0]]; inverses are computed numerically from the forward
// constants so the round trip is exact to machine precision.
namespace labspace {

inline constexpr Mat3 kRgbToLms = {{{0.3811, 0.5783, 0.0402},
                                    {0.1967, 0.7244, 0.0782},
                                    {0.0241, 0.1288, 0.8444}}};

inline const Mat3 kLogLmsToLab = [] {
  const double s3 = std::sqrt(3.0), s6 = std::sqrt(6.0), s2 = std::sqrt(2.0);
  return Mat3{{{1.0 / s3, 1.0 / s3, 1.0 / s3},
               {1.0 / s6, 1.0 / s6, -2.0 / s6},
               {1.0 / s2, -1.0 / s2, 0.0}}};
}();

inline const Mat3 kLmsToRgb = mat_inverse(kRgbToLms);
inline const Mat3 kLabToLogLms = mat_inverse(kLogLmsToLab);

// one 8-bit quantization step; floors channels before the logarithm
inline constexpr double kChannelFloor = 1.0 / 255.0;

}  // namespace labspace

inline Vec3 srgb_pixel_to_lab(const Vec3& rgb) {
  Vec3 c;
  for (int i = 0; i < 3; ++i) {
    double v = rgb[i];
    if (v < labspace::kChannelFloor) v = labspace::kChannelFloor;
    if (v > 1.0) v = 1.0;
    c[i] = v;
  }
  Vec3 lms = mat_apply(labspace::kRgbToLms, c);
  Vec3 log_lms = {std::log10(lms[0]), std::log10(lms[1]), std::log10(lms[2])};
  return mat_apply(labspace::kLogLmsToLab, log_lms);
}

inline Vec3 lab_pixel_to_srgb(const Vec3& lab) {
  Vec3 log_lms = mat_apply(labspace::kLabToLogLms, lab);
  Vec3 lms;
  for (int i = 0; i < 3; ++i) {
    // saturate far outside the gamut: pow alone would overflow to inf and
    // the mixing matrix can then cancel inf-inf into NaN, which would slip
    // through the range clamp below
    double g = std::clamp(log_lms[i], -100.0, 100.0);
    lms[i] = std::pow(10.0, g);
  }
  Vec3 rgb = mat_apply(labspace::kLmsToRgb, lms);
  for (int i = 0; i < 3; ++i) {
    if (rgb[i] < 0.0) rgb[i] = 0.0;
    if (rgb[i] > 1.0) rgb[i] = 1.0;
  }
  return rgb;
}

inline LabImage srgb_to_lab(const Image& img) {
  if (!img.all_finite())
    throw std::invalid_argument("srgb_to_lab: non-finite pixel values");
  LabImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.set_pixel(y, x, srgb_pixel_to_lab(img.pixel(y, x)));
  return out;
}

inline Image lab_to_srgb(const LabImage& lab) {
  if (!lab.all_finite())
    throw std::invalid_argument("lab_to_srgb: non-finite channel values");
  Image out(lab.height, lab.width);
  for (int y = 0; y < lab.height; ++y)
    for (int x = 0; x < lab.width; ++x)
      out.set_pixel(y, x, lab_pixel_to_srgb(lab.pixel(y, x)));
  return out;
}

}  // namespace cop
