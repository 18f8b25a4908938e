#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cop/augment.hpp"
#include "cop/binio.hpp"
#include "cop/colorstats.hpp"
#include "cop/featuregrid.hpp"
#include "cop/mlp.hpp"
#include "cop/transfer.hpp"

namespace cop {

// Color-distribution regressor: grid features -> [mean l,a,b, log-sigma
// l,a,b]. The exp head keeps predicted sigma strictly positive.
struct PrompterNet {
  Mlp net;

  static std::vector<int> architecture() {
    return {kGridFeatures, 128, 64, 6};
  }

  static PrompterNet create(Rng& rng) {
    PrompterNet p{Mlp(architecture(), rng)};
    // Start the log-sigma outputs in the small-sigma regime. Image channel
    // spreads live orders of magnitude below the zero-bias exp(0) = 1, and
    // the race to drag them down otherwise overshoots wherever the input
    // level is high (exp gradient vanishes once collapsed).
    auto& w = p.net.params();
    for (int c = 0; c < 3; ++c) w[w.size() - 3 + c] = -3.0;
    return p;
  }
};

inline ColorStats prompter_forward(const PrompterNet& p, const Image& img) {
  if (!p.net.all_finite())
    throw std::runtime_error("prompter_forward: non-finite weights");
  std::vector<double> y = p.net.forward(pool_to_grid(img));
  ColorStats s;
  for (int c = 0; c < 3; ++c) {
    s.mean[c] = y[c];
    // keep exp away from inf (and from flushing to exactly zero): the
    // forward contract promises finite, strictly positive spreads
    s.stddev[c] = std::exp(std::clamp(y[c + 3], -700.0, 80.0));
  }
  return s;
}

// Penultimate (64-d hidden) activations; used only to probe how much
// identity information the prompter retains.
inline std::vector<double> prompter_features(const PrompterNet& p,
                                             const Image& img) {
  Mlp::Trace t;
  p.net.forward(pool_to_grid(img), t);
  return t.activations[t.activations.size() - 2];
}

// Mean squared error over the six stat components (3 means, 3 stddevs).
inline double prompter_loss(const ColorStats& pred, const ColorStats& target) {
  double s = 0;
  for (int c = 0; c < 3; ++c) {
    s += (pred.mean[c] - target.mean[c]) * (pred.mean[c] - target.mean[c]);
    s += (pred.stddev[c] - target.stddev[c]) *
         (pred.stddev[c] - target.stddev[c]);
  }
  return s / 6.0;
}

// Batch objective and its analytic gradient: mean over the batch of the
// per-image loss, computed on (mean, sigma) with the sigma components
// chained through the exp head. grad accumulates in-place (flat layout).
inline double prompter_batch_grad(const PrompterNet& p,
                                  const std::vector<std::vector<double>>& inputs,
                                  const std::vector<ColorStats>& targets,
                                  std::vector<double>& grad) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw std::invalid_argument("prompter_batch_grad: bad batch");
  const double n = static_cast<double>(inputs.size());
  double total = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Mlp::Trace trace;
    std::vector<double> y = p.net.forward(inputs[i], trace);
    ColorStats pred;
    for (int c = 0; c < 3; ++c) {
      pred.mean[c] = y[c];
      pred.stddev[c] = std::exp(y[c + 3]);
    }
    total += prompter_loss(pred, targets[i]);
    std::vector<double> dy(6);
    for (int c = 0; c < 3; ++c) {
      dy[c] = 2.0 * (pred.mean[c] - targets[i].mean[c]) / (6.0 * n);
      dy[c + 3] = 2.0 * (pred.stddev[c] - targets[i].stddev[c]) *
                  pred.stddev[c] / (6.0 * n);
    }
    p.net.backward(trace, dy, grad);
  }
  return total / n;
}

// Streaming trainer: corrupt, regress the originals, adapt.
class PrompterTrainer {
 public:
  explicit PrompterTrainer(PrompterNet net, double lr = 2e-4)
      : net_(std::move(net)), opt_(lr) {}

  const PrompterNet& prompter() const { return net_; }
  PrompterNet& prompter() { return net_; }

  // Corrupt the batch by re-sampling, then regress the original stats
  // from the corrupted appearance.
  double train_step(const std::vector<Image>& batch, Rng& rng) {
    auto corrupted = color_resample(batch, rng);
    std::vector<std::vector<double>> inputs;
    std::vector<ColorStats> targets;
    inputs.reserve(corrupted.size());
    targets.reserve(corrupted.size());
    for (const auto& r : corrupted) {
      inputs.push_back(pool_to_grid(r.image));
      targets.push_back(r.original);
    }
    return train_on_features(inputs, targets);
  }

  double train_on_features(const std::vector<std::vector<double>>& inputs,
                           const std::vector<ColorStats>& targets) {
    std::vector<double> grad(net_.net.param_count(), 0.0);
    double loss = prompter_batch_grad(net_, inputs, targets, grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("prompter train: non-finite loss");
    opt_.step(net_.net.params(), grad);
    return loss;
  }

 private:
  PrompterNet net_;
  Adam opt_;
};

// Rehearsal: re-style an image toward the distribution the prompter
// remembers for it. The prediction serves directly as transfer guidance.
inline Image prompter_recover(const PrompterNet& p, const Image& img) {
  return transfer_to_stats(img, prompter_forward(p, img));
}

// ------------------------------------------------------------------ pool

struct PrompterPool {
  std::vector<std::pair<std::string, PrompterNet>> entries;

  bool has_task(const std::string& task_id) const {
    for (const auto& [id, net] : entries)
      if (id == task_id) return true;
    return false;
  }

  void append(const std::string& task_id, PrompterNet net) {
    if (has_task(task_id))
      throw std::invalid_argument("pool: duplicate task id " + task_id);
    entries.emplace_back(task_id, std::move(net));
  }

  const PrompterNet& at(const std::string& task_id) const {
    for (const auto& [id, net] : entries)
      if (id == task_id) return net;
    throw std::out_of_range("pool: no task " + task_id);
  }
};

inline constexpr char kPoolMagic[8] = {'C', 'O', 'P', 'P',
                                       'O', 'O', 'L', '\n'};
inline constexpr uint32_t kPoolVersion = 1;

inline void pool_save(const PrompterPool& pool, std::ostream& os) {
  std::ostringstream payload;
  binio::put_u32(payload, kPoolVersion);
  binio::put_u32(payload, static_cast<uint32_t>(pool.entries.size()));
  for (const auto& [id, net] : pool.entries) {
    binio::put_string(payload, id);
    net.net.save(payload);
  }
  std::string bytes = payload.str();
  os.write(kPoolMagic, 8);
  binio::put_u64(os, bytes.size());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  binio::put_u64(os, binio::fnv1a(bytes));
}

inline void pool_save(const PrompterPool& pool, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pool_save: cannot open " + path);
  pool_save(pool, os);
  if (!os) throw std::runtime_error("pool_save: write failed: " + path);
}

inline PrompterPool pool_load(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kPoolMagic))
    throw std::runtime_error("pool_load: not a pool file");
  uint64_t size = binio::get_u64(is);
  if (size > (1ull << 32)) throw std::runtime_error("pool_load: oversized");
  std::string bytes(size, '\0');
  if (size && !is.read(bytes.data(), static_cast<std::streamsize>(size)))
    throw std::runtime_error("pool_load: truncated file");
  uint64_t checksum = binio::get_u64(is);
  if (checksum != binio::fnv1a(bytes))
    throw std::runtime_error("pool_load: checksum mismatch");

  std::istringstream payload(bytes);
  uint32_t version = binio::get_u32(payload);
  if (version != kPoolVersion)
    throw std::runtime_error("pool_load: unsupported version");
  uint32_t count = binio::get_u32(payload);
  PrompterPool pool;
  for (uint32_t i = 0; i < count; ++i) {
    std::string id = binio::get_string(payload);
    PrompterNet net{Mlp::load(payload)};
    pool.append(id, std::move(net));
  }
  return pool;
}

inline PrompterPool pool_load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pool_load: cannot open " + path);
  return pool_load(is);
}

}  // namespace cop
