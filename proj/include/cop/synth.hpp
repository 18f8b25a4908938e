#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/colorstats.hpp"
#include "cop/dataset.hpp"
#include "cop/rng.hpp"
#include "cop/transfer.hpp"

namespace cop {

// Synthetic person-style dataset. Each identity owns a smooth noise texture
// plus a banded pattern in the central box; each camera stamps its own
// border texture and pulls the rendering toward its own color statistics.
// The identity signal is spatial (band layout), so it survives the
// per-channel affine restyling that cameras and augmentations apply.

struct SynthCamera {
  std::string id;
  ColorStats stats;  // target statistics of this camera's output
  int images_per_identity = -1;  // <0: use the spec-wide count. Real camera
                                 // networks are uneven; a sparse camera still
                                 // widens the style spread of every batch it
                                 // lands in.
  int eval_images = -1;  // <0: default eval count; 0 keeps the camera out of
                         // the retrieval split entirely
};

struct SynthSpec {
  int height = 64;
  int width = 32;
  int identities = 8;
  int images_per_identity = 2;  // per camera
  std::vector<SynthCamera> cameras;
  double jitter = 0.15;  // per-image stat jitter, relative to camera spread
  double pattern_strength = 0.22;  // identity band contrast; low values make
                                   // identity hinge on color context
  double texture_contrast = 0.25;  // half-range of the smooth identity texture
  int pattern_classes = 0;  // >0: band pattern keyed by id % classes, so ids
                            // sharing a class are impostor pairs that only the
                            // subtle texture can separate
  double pixel_noise = 0.02;
  double eval_jitter = -1.0;       // <0: same as jitter
  double eval_pixel_noise = -1.0;  // <0: same as pixel_noise
  double tint_strength = 0.0;  // >0: identity = chroma tint of the central
                               // box relative to the border, a cue that only
                               // survives restyling as a region difference
  int texture_ids = -1;  // >0: only this many distinct base textures, shared
                         // across identities (id % texture_ids)
  std::uint64_t texture_seed = 1;
};

namespace detail {

inline Image synth_base_texture(const SynthSpec& spec, int identity) {
  int tex_key = spec.texture_ids > 0 ? identity % spec.texture_ids : identity;
  Rng tex = Rng(spec.texture_seed).fork("id" + std::to_string(tex_key));
  const int gh = 8, gw = 4;
  std::vector<double> grid(gh * gw * 3);
  for (auto& v : grid)
    v = tex.uniform(0.5 - spec.texture_contrast, 0.5 + spec.texture_contrast);

  Image img(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y) {
    double gy = (y + 0.5) / spec.height * gh - 0.5;
    int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, gh - 1);
    int y1 = std::min(y0 + 1, gh - 1);
    double fy = std::clamp(gy - y0, 0.0, 1.0);
    for (int x = 0; x < spec.width; ++x) {
      double gx = (x + 0.5) / spec.width * gw - 0.5;
      int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, gw - 1);
      int x1 = std::min(x0 + 1, gw - 1);
      double fx = std::clamp(gx - x0, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        double a = grid[(y0 * gw + x0) * 3 + c] * (1 - fx) +
                   grid[(y0 * gw + x1) * 3 + c] * fx;
        double b = grid[(y1 * gw + x0) * 3 + c] * (1 - fx) +
                   grid[(y1 * gw + x1) * 3 + c] * fx;
        img.at(y, x, c) = a * (1 - fy) + b * fy;
      }
    }
  }

  // banded luminance pattern in the central box, keyed by identity bits
  std::uint64_t pattern_key = spec.pattern_classes > 0
                                  ? identity % spec.pattern_classes
                                  : identity;
  std::uint64_t bits = detail::splitmix64(pattern_key + 101);
  int top = spec.height / 4, bottom = spec.height - spec.height / 4;
  int left = spec.width / 4, right = spec.width - spec.width / 4;
  int bands = 6;
  int band_h = std::max(1, (bottom - top) / bands);
  for (int y = top; y < bottom; ++y) {
    int band = std::min((y - top) / band_h, bands - 1);
    double delta = (bits >> band & 1) ? spec.pattern_strength : -spec.pattern_strength;
    for (int x = left; x < right; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = std::clamp(img.at(y, x, c) + delta, 0.02, 0.98);
  }

  if (spec.tint_strength > 0) {
    // four sign bits of identity: opponent-channel tints of the upper and
    // lower halves of the central box. Signs survive the per-image restyle
    // that erases absolute color levels.
    int mid = (top + bottom) / 2;
    for (int half = 0; half < 2; ++half) {
      double ta = (identity >> (2 * half) & 1) ? spec.tint_strength
                                               : -spec.tint_strength;
      double tb = (identity >> (2 * half + 1) & 1) ? spec.tint_strength
                                                   : -spec.tint_strength;
      int y0 = half == 0 ? top : mid, y1 = half == 0 ? mid : bottom;
      for (int y = y0; y < y1; ++y)
        for (int x = left; x < right; ++x) {
          img.at(y, x, 0) = std::clamp(img.at(y, x, 0) + ta, 0.02, 0.98);
          img.at(y, x, 1) = std::clamp(img.at(y, x, 1) - ta, 0.02, 0.98);
          img.at(y, x, 2) = std::clamp(img.at(y, x, 2) + tb, 0.02, 0.98);
        }
    }
  }
  return img;
}

inline void synth_stamp_camera(Image& img, int cam_index) {
  // border checker whose period and phase depend on the camera; this is the
  // only content cue a prompter can use to tell cameras apart
  int top = img.height / 4, bottom = img.height - img.height / 4;
  int left = img.width / 4, right = img.width - img.width / 4;
  int period = 2 + cam_index % 5;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      bool inside = y >= top && y < bottom && x >= left && x < right;
      if (inside) continue;
      double delta =
          ((x + y * (cam_index + 1)) % period == 0) ? 0.18 : -0.08;
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = std::clamp(img.at(y, x, c) + delta, 0.02, 0.98);
    }
}

inline ColorStats synth_jitter_stats(const ColorStats& cam, double jitter,
                                     Rng& rng) {
  ColorStats out = cam;
  for (int c = 0; c < 3; ++c) {
    out.mean[c] = cam.mean[c] + jitter * cam.stddev[c] * rng.normal();
    double scale = 1.0 + jitter * rng.normal();
    out.stddev[c] = cam.stddev[c] * std::max(scale, 0.2);
  }
  return out;
}

}  // namespace detail

inline std::vector<Sample> synth_generate(const SynthSpec& spec,
                                          std::uint64_t seed) {
  if (spec.cameras.empty())
    throw std::invalid_argument("synth: spec needs at least one camera");
  if (spec.height < 8 || spec.width < 8)
    throw std::invalid_argument("synth: image size too small");
  Rng root(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(spec.identities) * spec.cameras.size() *
              spec.images_per_identity);
  for (int id = 0; id < spec.identities; ++id) {
    Image base = detail::synth_base_texture(spec, id);
    for (size_t k = 0; k < spec.cameras.size(); ++k) {
      Image shot = base;
      detail::synth_stamp_camera(shot, static_cast<int>(k));
      int n_img = spec.cameras[k].images_per_identity >= 0
                      ? spec.cameras[k].images_per_identity
                      : spec.images_per_identity;
      for (int j = 0; j < n_img; ++j) {
        Rng r = root.fork("img" + std::to_string(id) + "_" +
                          std::to_string(k) + "_" + std::to_string(j));
        Image noisy = shot;
        for (auto& v : noisy.data)
          v = std::clamp(v + r.uniform(-spec.pixel_noise, spec.pixel_noise), 0.0, 1.0);
        ColorStats target =
            detail::synth_jitter_stats(spec.cameras[k].stats, spec.jitter, r);
        Sample s;
        s.image = transfer_to_stats(noisy, target);
        s.identity = id;
        s.camera = spec.cameras[k].id;
        s.source = "synth:" + std::to_string(id) + "_" + spec.cameras[k].id +
                   "_" + std::to_string(j);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

// Train plus a disjoint retrieval split: one query and one gallery image per
// (identity, camera), drawn from an independent stream of the same spec.
struct SynthTaskData {
  std::vector<Sample> train;
  std::vector<Sample> query;
  std::vector<Sample> gallery;
};

inline SynthTaskData synth_task_data(const SynthSpec& spec,
                                     std::uint64_t seed) {
  SynthTaskData data;
  Rng root(seed);
  data.train = synth_generate(spec, root.fork("train").seed());
  SynthSpec eval_spec = spec;
  eval_spec.images_per_identity = 2;
  for (auto& cam : eval_spec.cameras) cam.images_per_identity = cam.eval_images;
  if (spec.eval_jitter >= 0) eval_spec.jitter = spec.eval_jitter;
  if (spec.eval_pixel_noise >= 0) eval_spec.pixel_noise = spec.eval_pixel_noise;
  std::vector<Sample> eval =
      synth_generate(eval_spec, root.fork("eval").seed());
  for (auto& s : eval) {
    // synth_generate emits image j = 0 then 1 for each (identity, camera)
    bool is_query = s.source.back() == '0';
    (is_query ? data.query : data.gallery).push_back(std::move(s));
  }
  return data;
}

}  // namespace cop
