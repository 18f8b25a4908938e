#pragma once

#include <stdexcept>
#include <vector>

#include "cop/memory.hpp"

namespace cop {

inline constexpr int kOutlier = -1;

// Density-based clustering over cosine distance (1 - <a,b> for unit
// vectors). Core point: >= min_samples neighbors within eps, the point
// itself included. Clusters are connected core regions plus the border
// points reachable from them; everything else is OUTLIER. Deterministic:
// cluster ids follow first-touch order of the input.
inline std::vector<int> cluster_pseudo_labels(
    const std::vector<std::vector<double>>& features, double eps = 0.5,
    int min_samples = 4) {
  if (features.empty())
    throw std::invalid_argument("cluster_pseudo_labels: empty input");
  const int n = static_cast<int>(features.size());

  std::vector<std::vector<int>> neighbors(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double d = 1.0 - detail::dot(features[i], features[j]);
      if (d <= eps) neighbors[i].push_back(j);  // j == i counts too
    }
  }
  std::vector<bool> core(n);
  for (int i = 0; i < n; ++i)
    core[i] = static_cast<int>(neighbors[i].size()) >= min_samples;

  std::vector<int> labels(n, kOutlier);
  int next_label = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != kOutlier) continue;
    // expand over the core graph; border points are claimed by the first
    // cluster that reaches them
    int cluster = next_label++;
    std::vector<int> stack{i};
    labels[i] = cluster;
    while (!stack.empty()) {
      int p = stack.back();
      stack.pop_back();
      for (int q : neighbors[p]) {
        if (labels[q] == kOutlier) {
          labels[q] = cluster;
          if (core[q]) stack.push_back(q);  // only cores keep expanding
        }
      }
    }
  }
  return labels;
}

}  // namespace cop
