#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "cop/colorstats.hpp"
#include "cop/rng.hpp"
#include "cop/transfer.hpp"

namespace cop {

struct ResampledImage {
  Image image;          // corrupted appearance
  ColorStats original;  // regression target: the pre-corruption stats
};

// Corrupt a batch by moving every image to statistics drawn from a Gaussian
// model fitted over the batch's own statistics. All random draws happen in
// one deterministic pass before any transfer, so results are reproducible
// regardless of how the transfers are later scheduled.
inline std::vector<ResampledImage> color_resample(
    const std::vector<Image>& batch, Rng& rng) {
  if (batch.empty())
    throw std::invalid_argument("color_resample: empty batch");
  std::vector<LabImage> labs;
  std::vector<ColorStats> stats;
  labs.reserve(batch.size());
  stats.reserve(batch.size());
  for (const auto& img : batch) {
    labs.push_back(srgb_to_lab(img));
    stats.push_back(image_stats(labs.back()));
  }
  StatDistribution model = batch_stat_model(stats);

  std::vector<ColorStats> drawn(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    for (int c = 0; c < 3; ++c)
      drawn[i].mean[c] =
          model.center.mean[c] + model.spread.mean[c] * rng.normal();
    for (int c = 0; c < 3; ++c) {
      double s =
          model.center.stddev[c] + model.spread.stddev[c] * rng.normal();
      drawn[i].stddev[c] = s < 0.0 ? 0.0 : s;  // truncate, never redraw
    }
  }

  std::vector<ResampledImage> out;
  out.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i)
    out.push_back(
        {lab_to_srgb(transfer_lab(labs[i], stats[i], drawn[i])), stats[i]});
  return out;
}

// Permute the per-image statistics within a batch with one global random
// permutation and transfer each image to its assigned style.
inline std::vector<Image> color_shuffle(const std::vector<Image>& batch,
                                        Rng& rng) {
  if (batch.size() < 2)
    throw std::invalid_argument("color_shuffle: batch size must be >= 2");
  std::vector<LabImage> labs;
  std::vector<ColorStats> stats;
  labs.reserve(batch.size());
  stats.reserve(batch.size());
  for (const auto& img : batch) {
    labs.push_back(srgb_to_lab(img));
    stats.push_back(image_stats(labs.back()));
  }
  std::vector<int> perm = rng.permutation(static_cast<int>(batch.size()));
  std::vector<Image> out;
  out.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i)
    out.push_back(
        lab_to_srgb(transfer_lab(labs[i], stats[i], stats[perm[i]])));
  return out;
}

}  // namespace cop
