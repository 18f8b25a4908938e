#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/memory.hpp"

namespace cop {

struct RetrievalItem {
  std::vector<double> feature;
  int identity = -1;
  std::string camera;  // empty when unknown; compared verbatim
};

struct RetrievalResult {
  double map = 0.0;
  double rank1 = 0.0;
  int evaluated_queries = 0;
  int skipped_queries = 0;  // queries left without any valid positive
};

// Cosine-similarity ranking with the cross-camera protocol: gallery
// entries sharing BOTH identity and camera with the query are excluded.
// Ties break by gallery order (stable sort), so results are deterministic.
inline RetrievalResult evaluate_retrieval(
    const std::vector<RetrievalItem>& queries,
    const std::vector<RetrievalItem>& gallery) {
  if (queries.empty() || gallery.empty())
    throw std::invalid_argument("evaluate_retrieval: empty input");
  RetrievalResult res;
  double ap_sum = 0, rank1_sum = 0;
  for (const auto& q : queries) {
    std::vector<int> keep;
    keep.reserve(gallery.size());
    int positives = 0;
    for (int g = 0; g < static_cast<int>(gallery.size()); ++g) {
      const auto& item = gallery[g];
      if (item.identity == q.identity && item.camera == q.camera) continue;
      keep.push_back(g);
      if (item.identity == q.identity) ++positives;
    }
    if (positives == 0) {
      ++res.skipped_queries;
      continue;
    }
    std::vector<double> sim(keep.size());
    for (size_t k = 0; k < keep.size(); ++k)
      sim[k] = detail::dot(q.feature, gallery[keep[k]].feature);
    std::vector<int> order(keep.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sim[a] > sim[b]; });

    int hits = 0;
    double ap = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
      if (gallery[keep[order[rank]]].identity == q.identity) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    ap /= positives;
    ap_sum += ap;
    rank1_sum += gallery[keep[order[0]]].identity == q.identity ? 1.0 : 0.0;
    ++res.evaluated_queries;
  }
  if (res.evaluated_queries == 0)
    throw std::runtime_error("evaluate_retrieval: no query has a positive");
  res.map = ap_sum / res.evaluated_queries;
  res.rank1 = rank1_sum / res.evaluated_queries;
  return res;
}

}  // namespace cop
