#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cop/embed.hpp"

namespace cop {

// One running unit-norm centroid per pseudo-class; the positive/negative
// set of the contrastive objective.
struct PrototypeMemory {
  std::vector<std::vector<double>> prototypes;
  double tau = 0.05;
  double alpha = 0.2;
  bool renormalize = true;  // raw-update mode kept only for ablation

  int size() const { return static_cast<int>(prototypes.size()); }
  int dim() const {
    return prototypes.empty() ? 0 : static_cast<int>(prototypes[0].size());
  }
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// -log( exp(<f,c+>/tau) / sum_i exp(<f,ci>/tau) ), max-subtracted.
inline double contrastive_loss(const std::vector<double>& f,
                               const PrototypeMemory& memory, int label) {
  if (label < 0 || label >= memory.size())
    throw std::out_of_range("contrastive_loss: label out of range");
  std::vector<double> logits(memory.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < memory.size(); ++i) {
    logits[i] = detail::dot(f, memory.prototypes[i]) / memory.tau;
    max_logit = std::max(max_logit, logits[i]);
  }
  double denom = 0;
  for (double l : logits) denom += std::exp(l - max_logit);
  return -(logits[label] - max_logit) + std::log(denom);
}

// d loss / d f. Prototypes are constants within a step.
inline std::vector<double> contrastive_grad(const std::vector<double>& f,
                                            const PrototypeMemory& memory,
                                            int label) {
  if (label < 0 || label >= memory.size())
    throw std::out_of_range("contrastive_grad: label out of range");
  std::vector<double> logits(memory.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < memory.size(); ++i) {
    logits[i] = detail::dot(f, memory.prototypes[i]) / memory.tau;
    max_logit = std::max(max_logit, logits[i]);
  }
  double denom = 0;
  for (double l : logits) denom += std::exp(l - max_logit);

  std::vector<double> grad(f.size(), 0.0);
  for (int i = 0; i < memory.size(); ++i) {
    double p = std::exp(logits[i] - max_logit) / denom;
    double coeff = (p - (i == label ? 1.0 : 0.0)) / memory.tau;
    for (size_t d = 0; d < f.size(); ++d)
      grad[d] += coeff * memory.prototypes[i][d];
  }
  return grad;
}

// c_i <- alpha * c_i + (1 - alpha) * mean of the batch features carrying
// label i, applied once per represented class, then renormalized.
inline void memory_update(
    PrototypeMemory& memory,
    const std::vector<std::pair<std::vector<double>, int>>& batch) {
  if (batch.empty()) return;
  std::vector<std::vector<double>> sums(memory.size());
  std::vector<int> counts(memory.size(), 0);
  for (const auto& [f, label] : batch) {
    if (label < 0) continue;  // outliers never touch the memory
    if (label >= memory.size())
      throw std::out_of_range("memory_update: label out of range");
    if (sums[label].empty()) sums[label].assign(f.size(), 0.0);
    for (size_t d = 0; d < f.size(); ++d) sums[label][d] += f[d];
    ++counts[label];
  }
  for (int i = 0; i < memory.size(); ++i) {
    if (counts[i] == 0) continue;
    auto& c = memory.prototypes[i];
    for (size_t d = 0; d < c.size(); ++d) {
      double mean = sums[i][d] / counts[i];
      c[d] = memory.alpha * c[d] + (1.0 - memory.alpha) * mean;
    }
    if (memory.renormalize) c = l2_normalize(std::move(c));
  }
}

// Prototype i = unit-normalized mean of the features labeled i.
// labels use -1 for outliers; non-outlier labels must cover 0..K-1.
inline PrototypeMemory init_memory_from_clusters(
    const std::vector<std::vector<double>>& features,
    const std::vector<int>& labels, double tau = 0.05, double alpha = 0.2) {
  if (features.size() != labels.size())
    throw std::invalid_argument("init_memory: size mismatch");
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  if (k == 0)
    throw std::runtime_error(
        "init_memory: zero clusters; loosen the clustering radius");
  PrototypeMemory memory;
  memory.tau = tau;
  memory.alpha = alpha;
  memory.prototypes.assign(k, {});
  std::vector<int> counts(k, 0);
  for (size_t i = 0; i < features.size(); ++i) {
    int l = labels[i];
    if (l < 0) continue;
    if (memory.prototypes[l].empty())
      memory.prototypes[l].assign(features[i].size(), 0.0);
    for (size_t d = 0; d < features[i].size(); ++d)
      memory.prototypes[l][d] += features[i][d];
    ++counts[l];
  }
  for (int l = 0; l < k; ++l) {
    if (counts[l] == 0)
      throw std::runtime_error("init_memory: label range has a hole");
    for (double& v : memory.prototypes[l]) v /= counts[l];
    memory.prototypes[l] = l2_normalize(std::move(memory.prototypes[l]));
  }
  return memory;
}

}  // namespace cop
