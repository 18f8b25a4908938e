#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cop/featuregrid.hpp"
#include "cop/mlp.hpp"

namespace cop {

inline constexpr int kEmbedDim = 64;

// Retrieval embedding: grid features -> 64-d vector projected to the unit
// sphere. Same architecture family as the prompter, minus the stat head.
struct EmbedNet {
  Mlp net;

  static std::vector<int> architecture() {
    return {kGridFeatures, 128, kEmbedDim};
  }

  static EmbedNet create(Rng& rng) { return {Mlp(architecture(), rng)}; }
};

inline constexpr double kNormFloor = 1e-12;

inline std::vector<double> l2_normalize(std::vector<double> v,
                                        double* norm_out = nullptr) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (norm_out) *norm_out = n;
  const double inv = 1.0 / std::max(n, kNormFloor);
  for (double& x : v) x *= inv;
  return v;
}

inline std::vector<double> embed_forward(const EmbedNet& e, const Image& img) {
  return l2_normalize(e.net.forward(pool_to_grid(img)));
}

// Trace-and-norm variant for training.
inline std::vector<double> embed_forward(const EmbedNet& e,
                                         const std::vector<double>& features,
                                         Mlp::Trace& trace, double& norm) {
  return l2_normalize(e.net.forward(features, trace), &norm);
}

// Chain dL/d(unit feature) back through the normalization and the net:
// with f = z / |z|, dL/dz = (df - f * <f, df>) / |z|.
inline void embed_backward(const EmbedNet& e, const Mlp::Trace& trace,
                           const std::vector<double>& unit_f, double norm,
                           const std::vector<double>& df,
                           std::vector<double>& grad) {
  if (unit_f.size() != df.size())
    throw std::invalid_argument("embed_backward: size mismatch");
  double dot = 0;
  for (size_t i = 0; i < df.size(); ++i) dot += unit_f[i] * df[i];
  const double inv = 1.0 / std::max(norm, kNormFloor);
  std::vector<double> dz(df.size());
  for (size_t i = 0; i < df.size(); ++i)
    dz[i] = (df[i] - unit_f[i] * dot) * inv;
  e.net.backward(trace, dz, grad);
}

}  // namespace cop
