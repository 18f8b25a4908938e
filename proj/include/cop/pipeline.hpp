#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/augment.hpp"
#include "cop/binio.hpp"
#include "cop/cluster.hpp"
#include "cop/colorstats.hpp"
#include "cop/config.hpp"
#include "cop/dataset.hpp"
#include "cop/embed.hpp"
#include "cop/memory.hpp"
#include "cop/prompter.hpp"
#include "cop/retrieval.hpp"
#include "cop/rng.hpp"
#include "cop/synth.hpp"
#include "cop/transfer.hpp"
#include "json.hpp"

namespace cop {

enum class Guidance { Prompter, Cas };
enum class Rehearsal { None, Transfer, Replay };

// One task of the stream; also reused for eval-only ("unseen") sets, which
// ignore the training fields.
struct TaskSpec {
  std::string id;
  bool supervised = false;
  bool use_synth = true;
  SynthSpec synth;
  std::string train_dir;
  Naming naming = Naming::MarketStyle;
  std::string query_dir;
  std::string gallery_dir;
  int epochs = -1;       // < 0 → stream default
  double lambda = -1.0;  // < 0 → stream default
};

struct StreamOptions {
  std::uint64_t seed = 1;
  std::string out_dir;  // empty → in-memory result only
  Guidance guidance = Guidance::Prompter;
  Rehearsal rehearsal = Rehearsal::Transfer;
  double lambda = 0.5;
  int epochs = 12;
  int prompter_epochs = 8;
  int batch_size = 16;
  double embed_lr = 2e-4;
  double prompter_lr = 2e-4;
  double cluster_eps = 0.5;
  int cluster_min_samples = 4;
  double tau = 0.05;
  double momentum_alpha = 0.2;
  bool renormalize_prototypes = true;
  int replay_capacity = 512;
  bool shuffle_pretrain = true;
  bool object_agnostic = false;  // frame-derived source stats for CaS twins
  double crop_fraction = 0.5;
  bool flip = false;
  bool crop = false;
  bool erase = false;
  std::vector<TaskSpec> tasks;
  std::vector<TaskSpec> unseen;  // evaluated at every checkpoint, never trained
};

struct LossRow {
  std::string task;
  int epoch = 0;
  int step = 0;
  double total = 0;
  double orig = 0;
  double twin = 0;
  bool has_twin = false;
};

struct PrompterLossRow {
  std::string task;
  int epoch = 0;
  int step = 0;
  double loss = 0;
};

struct EvalRow {
  std::string model_after;
  std::string eval_task;
  double map = 0;
  double rank1 = 0;
  int evaluated = 0;
  int skipped = 0;
};

struct StreamResult {
  std::vector<LossRow> losses;
  std::vector<PrompterLossRow> prompter_losses;
  std::vector<EvalRow> evals;
  AccessAudit audit;
  PrompterPool pool;
  EmbedNet embed;
  std::vector<std::string> task_ids;
  bool aborted = false;
  std::string abort_reason;

  const EvalRow* find_eval(const std::string& model_after,
                           const std::string& eval_task) const {
    for (const auto& row : evals)
      if (row.model_after == model_after && row.eval_task == eval_task)
        return &row;
    return nullptr;
  }
};

// ------------------------------------------------------------ checkpoints

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'P', 'C',
                                             'K', 'P', 'T', '\n'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Mlp& net, std::ostream& os) {
  std::ostringstream body;
  binio::put_u32(body, kCheckpointVersion);
  net.save(body);
  std::string payload = body.str();
  os.write(kCheckpointMagic, 8);
  binio::put_u64(os, payload.size());
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  binio::put_u64(os, binio::fnv1a(payload));
}

inline void save_checkpoint(const Mlp& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  save_checkpoint(net, os);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Mlp load_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  uint64_t size = binio::get_u64(is);
  if (size > (1ull << 32)) throw std::runtime_error("checkpoint: absurd size");
  std::string payload(size, '\0');
  if (size && !is.read(payload.data(), static_cast<std::streamsize>(size)))
    throw std::runtime_error("checkpoint: truncated payload");
  if (binio::get_u64(is) != binio::fnv1a(payload))
    throw std::runtime_error("checkpoint: checksum mismatch");
  std::istringstream body(payload);
  uint32_t version = binio::get_u32(body);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  return Mlp::load(body);
}

inline Mlp load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  return load_checkpoint(is);
}

// ------------------------------------------------- geometric augmentation

namespace detail {

struct GeoParams {
  bool flip = false;
  bool crop = false;
  int crop_y = 0, crop_x = 0, crop_h = 0, crop_w = 0;
  bool erase = false;
  int erase_y = 0, erase_x = 0, erase_h = 0, erase_w = 0;
};

// Draw once per image so an image and its color twin share the exact same
// geometry; color stays the only controlled difference.
inline GeoParams draw_geo(const StreamOptions& opt, int h, int w, Rng& rng) {
  GeoParams g;
  if (opt.flip) g.flip = rng.uniform() < 0.5;
  if (opt.crop) {
    g.crop = true;
    g.crop_h = std::max(4, static_cast<int>(h * 0.9));
    g.crop_w = std::max(4, static_cast<int>(w * 0.9));
    g.crop_y = rng.below(h - g.crop_h + 1);
    g.crop_x = rng.below(w - g.crop_w + 1);
  }
  if (opt.erase) {
    g.erase = rng.uniform() < 0.5;
    int eh = std::max(1, h / 4), ew = std::max(1, w / 4);
    g.erase_h = 1 + rng.below(eh);
    g.erase_w = 1 + rng.below(ew);
    g.erase_y = rng.below(std::max(1, h - g.erase_h + 1));
    g.erase_x = rng.below(std::max(1, w - g.erase_w + 1));
  }
  return g;
}

inline Image apply_geo(const Image& img, const GeoParams& g) {
  Image out = img;
  if (g.crop) {
    Image cropped(g.crop_h, g.crop_w);
    for (int y = 0; y < g.crop_h; ++y)
      for (int x = 0; x < g.crop_w; ++x)
        for (int c = 0; c < 3; ++c)
          cropped.at(y, x, c) = out.at(g.crop_y + y, g.crop_x + x, c);
    out = std::move(cropped);
  }
  if (g.flip) {
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width / 2; ++x)
        for (int c = 0; c < 3; ++c)
          std::swap(out.at(y, x, c), out.at(y, out.width - 1 - x, c));
  }
  if (g.erase) {
    int y1 = std::min(out.height, g.erase_y + g.erase_h);
    int x1 = std::min(out.width, g.erase_x + g.erase_w);
    for (int y = g.erase_y; y < y1; ++y)
      for (int x = g.erase_x; x < x1; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.5;
  }
  return out;
}

inline bool any_geo(const StreamOptions& opt) {
  return opt.flip || opt.crop || opt.erase;
}

// eps widens in fixed steps until some cluster forms; a stream that still
// finds nothing aborts with its context in the message
inline std::vector<int> cluster_with_relaxation(
    const std::vector<std::vector<double>>& features, double eps,
    int min_samples, const std::string& context, double* used_eps = nullptr) {
  for (int attempt = 0; attempt < 4; ++attempt, eps += 0.1) {
    std::vector<int> labels = cluster_pseudo_labels(features, eps, min_samples);
    for (int l : labels)
      if (l != kOutlier) {
        if (used_eps) *used_eps = eps;
        return labels;
      }
  }
  throw std::runtime_error(
      context + ": zero clusters even after eps relaxation up to " +
      format_double(eps - 0.1) + "; loosen the clustering radius");
}

// ------------------------------------------------------ batch training op

struct BatchItem {
  std::vector<double> grid;
  int label = 0;
  double weight = 0;
  bool is_twin = false;
};

struct BatchLoss {
  double total = 0;
  double orig = 0;
  double twin = 0;
  bool has_twin = false;
};

// Pure loss evaluation of a prepared batch against the current net/memory;
// training uses the same arithmetic, so the mixing law is testable here.
inline BatchLoss batch_loss(const EmbedNet& embed, const PrototypeMemory& memory,
                            const std::vector<BatchItem>& items) {
  BatchLoss out;
  double orig_sum = 0, twin_sum = 0;
  int orig_n = 0, twin_n = 0;
  for (const auto& it : items) {
    std::vector<double> f = l2_normalize(embed.net.forward(it.grid));
    double loss = contrastive_loss(f, memory, it.label);
    out.total += it.weight * loss;
    if (it.is_twin) {
      twin_sum += loss;
      ++twin_n;
      out.has_twin = true;
    } else {
      orig_sum += loss;
      ++orig_n;
    }
  }
  out.orig = orig_n ? orig_sum / orig_n : 0.0;
  out.twin = twin_n ? twin_sum / twin_n : 0.0;
  return out;
}

// One optimizer step over a weighted batch; prototypes then absorb every
// feature in the batch, twins included.
inline BatchLoss train_batch(EmbedNet& embed, Adam& opt, PrototypeMemory& memory,
                             const std::vector<BatchItem>& items) {
  BatchLoss out;
  double orig_sum = 0, twin_sum = 0;
  int orig_n = 0, twin_n = 0;
  std::vector<double> grad(embed.net.param_count(), 0.0);
  std::vector<std::pair<std::vector<double>, int>> mem_batch;
  mem_batch.reserve(items.size());
  for (const auto& it : items) {
    Mlp::Trace trace;
    double norm = 0;
    std::vector<double> f = embed_forward(embed, it.grid, trace, norm);
    double loss = contrastive_loss(f, memory, it.label);
    std::vector<double> df = contrastive_grad(f, memory, it.label);
    for (double& d : df) d *= it.weight;
    embed_backward(embed, trace, f, norm, df, grad);
    out.total += it.weight * loss;
    if (it.is_twin) {
      twin_sum += loss;
      ++twin_n;
      out.has_twin = true;
    } else {
      orig_sum += loss;
      ++orig_n;
    }
    mem_batch.emplace_back(std::move(f), it.label);
  }
  if (!std::isfinite(out.total))
    throw std::runtime_error("train_batch: non-finite loss");
  opt.step(embed.net.params(), grad);
  memory_update(memory, mem_batch);
  out.orig = orig_n ? orig_sum / orig_n : 0.0;
  out.twin = twin_n ? twin_sum / twin_n : 0.0;
  return out;
}

inline std::vector<int> contiguous_labels(const std::vector<Sample>& data) {
  std::map<int, int> remap;
  for (const auto& s : data) {
    if (!s.identity)
      throw std::runtime_error("supervised training needs identity labels (" +
                               s.source + " has none)");
    remap.emplace(*s.identity, 0);
  }
  int next = 0;
  for (auto& [id, slot] : remap) slot = next++;
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const auto& s : data) labels.push_back(remap.at(*s.identity));
  return labels;
}

}  // namespace detail

// --------------------------------------------------------- data plumbing

namespace detail {

inline std::vector<Sample> load_train_samples(const TaskSpec& t, const Rng& root,
                                              AccessAudit& audit) {
  if (t.use_synth) {
    SynthTaskData d = synth_task_data(t.synth, root.fork("data:" + t.id).seed());
    audit.record(t.id, static_cast<std::int64_t>(d.train.size()));
    return std::move(d.train);
  }
  LoadReport rep = load_directory(t.train_dir, t.naming, &audit, t.id);
  return std::move(rep.samples);
}

// query/gallery are materialized at evaluation time so the audit reflects
// exactly when a task's pixels were needed again
inline std::pair<std::vector<Sample>, std::vector<Sample>> load_eval_samples(
    const TaskSpec& t, const Rng& root, AccessAudit& audit) {
  if (t.use_synth) {
    SynthTaskData d = synth_task_data(t.synth, root.fork("data:" + t.id).seed());
    audit.record(t.id,
                 static_cast<std::int64_t>(d.query.size() + d.gallery.size()));
    return {std::move(d.query), std::move(d.gallery)};
  }
  if (t.query_dir.empty() || t.gallery_dir.empty())
    throw std::runtime_error("task " + t.id +
                             ": directory tasks need query_dir and gallery_dir");
  LoadReport q = load_directory(t.query_dir, t.naming, &audit, t.id);
  LoadReport g = load_directory(t.gallery_dir, t.naming, &audit, t.id);
  return {std::move(q.samples), std::move(g.samples)};
}

inline std::vector<RetrievalItem> retrieval_items(
    const EmbedNet& net, const std::vector<Sample>& samples) {
  std::vector<RetrievalItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.identity)
      throw std::runtime_error("evaluation needs identity labels (" + s.source +
                               " has none)");
    items.push_back({embed_forward(net, s.image), *s.identity, s.camera});
  }
  return items;
}

}  // namespace detail

inline EvalRow evaluate_checkpoint(const EmbedNet& net,
                                   const std::vector<Sample>& query,
                                   const std::vector<Sample>& gallery,
                                   const std::string& model_after,
                                   const std::string& eval_task) {
  RetrievalResult r = evaluate_retrieval(detail::retrieval_items(net, query),
                                         detail::retrieval_items(net, gallery));
  return {model_after, eval_task, r.map, r.rank1, r.evaluated_queries,
          r.skipped_queries};
}

// -------------------------------------------------------------- runner

class StreamRunner {
 public:
  explicit StreamRunner(StreamOptions opt)
      : opt_(std::move(opt)), root_(opt_.seed) {
    validate();
  }

  StreamResult run() {
    result_ = StreamResult{};
    Rng embed_init = root_.fork("embed-init");
    result_.embed = EmbedNet::create(embed_init);
    for (const auto& t : opt_.tasks) result_.task_ids.push_back(t.id);
    try {
      for (size_t i = 0; i < opt_.tasks.size(); ++i) {
        const TaskSpec& task = opt_.tasks[i];
        result_.audit.set_context(task.id, "train");
        std::vector<Sample> train =
            detail::load_train_samples(task, root_, result_.audit);
        if (train.empty())
          throw std::runtime_error("task " + task.id + ": no training images");
        if (i == 0) {
          run_source_task(task, train);
        } else {
          run_adaptation_task(task, train);
        }
        if (opt_.rehearsal == Rehearsal::Replay) update_replay(task, train);
        evaluate_after(task, i);
        if (!opt_.out_dir.empty()) {
          namespace fs = std::filesystem;
          fs::create_directories(opt_.out_dir);
          save_checkpoint(result_.embed.net,
                          (fs::path(opt_.out_dir) / ("embed_after_" + task.id + ".bin"))
                              .string());
        }
      }
    } catch (const std::exception& e) {
      result_.aborted = true;
      result_.abort_reason = e.what();
      flush_report();
      throw;
    }
    flush_report();
    return std::move(result_);
  }

 private:
  void validate() const {
    if (opt_.tasks.empty()) throw std::invalid_argument("stream: no tasks");
    if (!opt_.tasks.front().supervised)
      throw std::invalid_argument("stream: first task must be supervised");
    std::set<std::string> ids;
    for (const auto& t : opt_.tasks) {
      if (t.id.empty()) throw std::invalid_argument("stream: empty task id");
      if (!ids.insert(t.id).second)
        throw std::invalid_argument("stream: duplicate task id " + t.id);
      if (&t != &opt_.tasks.front() && t.supervised)
        throw std::invalid_argument(
            "stream: only the first task may be supervised");
      double lam = t.lambda < 0 ? opt_.lambda : t.lambda;
      if (lam < 0.0 || lam > 1.0)
        throw std::invalid_argument("stream: lambda must be in [0,1]");
      if ((t.epochs < 0 ? opt_.epochs : t.epochs) < 1)
        throw std::invalid_argument("stream: epochs must be >= 1");
    }
    for (const auto& u : opt_.unseen) {
      if (u.id.empty() || ids.count(u.id))
        throw std::invalid_argument("stream: unseen set ids must be fresh");
    }
  }

  int task_epochs(const TaskSpec& t) const {
    return t.epochs < 0 ? opt_.epochs : t.epochs;
  }
  double task_lambda(const TaskSpec& t) const {
    return t.lambda < 0 ? opt_.lambda : t.lambda;
  }

  // supervised first task: ground-truth classes, optional color shuffling,
  // prompter fitted concurrently on the same batches
  void run_source_task(const TaskSpec& task, const std::vector<Sample>& train) {
    std::vector<int> labels = detail::contiguous_labels(train);
    Rng batch_rng = root_.fork("batch:" + task.id);
    Rng shuffle_rng = root_.fork("shuffle:" + task.id);
    Rng ptrain_rng = root_.fork("ptrain:" + task.id);
    Rng aug_rng = root_.fork("aug:" + task.id);
    Rng init_rng = root_.fork("prompter-init:" + task.id);

    std::vector<std::vector<double>> grids;
    grids.reserve(train.size());
    for (const auto& s : train) grids.push_back(pool_to_grid(s.image));

    std::vector<std::vector<double>> features;
    features.reserve(train.size());
    for (const auto& g : grids)
      features.push_back(l2_normalize(result_.embed.net.forward(g)));
    PrototypeMemory memory = init_memory_from_clusters(
        features, labels, opt_.tau, opt_.momentum_alpha);
    memory.renormalize = opt_.renormalize_prototypes;

    Adam adam(opt_.embed_lr);
    PrompterTrainer prompter(PrompterNet::create(init_rng), opt_.prompter_lr);
    const int n = static_cast<int>(train.size());
    for (int epoch = 0; epoch < task_epochs(task); ++epoch) {
      std::vector<int> perm = batch_rng.permutation(n);
      int step = 0;
      for (int start = 0; start < n; start += opt_.batch_size, ++step) {
        int end = std::min(n, start + opt_.batch_size);
        std::vector<Image> images;
        std::vector<detail::BatchItem> items;
        for (int b = start; b < end; ++b) {
          const Sample& s = train[perm[b]];
          images.push_back(s.image);
          detail::BatchItem item;
          item.label = labels[perm[b]];
          if (detail::any_geo(opt_)) {
            auto geo = detail::draw_geo(opt_, s.image.height, s.image.width,
                                        aug_rng);
            item.grid = pool_to_grid(detail::apply_geo(s.image, geo));
          } else {
            item.grid = grids[perm[b]];
          }
          items.push_back(std::move(item));
        }
        if (opt_.shuffle_pretrain && images.size() >= 2) {
          std::vector<Image> shuffled = color_shuffle(images, shuffle_rng);
          for (size_t b = 0; b < shuffled.size(); ++b) {
            detail::BatchItem item;
            item.grid = pool_to_grid(shuffled[b]);
            item.label = items[b].label;
            item.is_twin = true;
            items.push_back(std::move(item));
          }
        }
        double w = 1.0 / items.size();
        for (auto& it : items) it.weight = w;
        detail::BatchLoss bl =
            detail::train_batch(result_.embed, adam, memory, items);
        result_.losses.push_back({task.id, epoch, step, bl.total, bl.orig,
                                  bl.twin, bl.has_twin});
        double ploss = prompter.train_step(images, ptrain_rng);
        result_.prompter_losses.push_back({task.id, epoch, step, ploss});
      }
    }
    result_.pool.append(task.id, prompter.prompter());
    store_camera_summary(task, train);
  }

  // unsupervised adaptation: per-epoch pseudo-labels, one pool draw per
  // epoch, λ-mixed loss over originals and their restyled twins
  void run_adaptation_task(const TaskSpec& task, const std::vector<Sample>& train) {
    const double lambda = task_lambda(task);
    Rng batch_rng = root_.fork("batch:" + task.id);
    Rng draw_rng = root_.fork("draw:" + task.id);
    Rng ptrain_rng = root_.fork("ptrain:" + task.id);
    Rng aug_rng = root_.fork("aug:" + task.id);
    Rng init_rng = root_.fork("prompter-init:" + task.id);

    // replay mode folds buffered old images into the working set as plain
    // unlabeled data; transfer mode instead synthesizes twins on the fly
    std::vector<const Image*> working;
    for (const auto& s : train) working.push_back(&s.image);
    if (opt_.rehearsal == Rehearsal::Replay)
      for (const auto& img : replay_) working.push_back(&img);

    std::vector<std::vector<double>> grids;
    grids.reserve(working.size());
    for (const Image* img : working) grids.push_back(pool_to_grid(*img));

    const bool use_twins = opt_.rehearsal == Rehearsal::Transfer &&
                           lambda > 0.0 && !result_.pool.entries.empty();
    std::vector<const ColorStats*> cas_entries;
    for (const auto& [tid, cams] : cas_store_)
      for (const auto& c : cams) cas_entries.push_back(&c.stats);

    Adam adam(opt_.embed_lr);
    const int n = static_cast<int>(working.size());
    for (int epoch = 0; epoch < task_epochs(task); ++epoch) {
      std::vector<std::vector<double>> features;
      features.reserve(n);
      for (const auto& g : grids)
        features.push_back(l2_normalize(result_.embed.net.forward(g)));
      std::vector<int> labels = detail::cluster_with_relaxation(
          features, opt_.cluster_eps, opt_.cluster_min_samples,
          "task " + task.id + " epoch " + std::to_string(epoch));
      // TODO(debug): remove before release
      if (std::getenv("COP_DEBUG")) {
        int k = 0, out = 0;
        for (int l : labels) l == kOutlier ? ++out : (k = std::max(k, l + 1));
        std::fprintf(stderr, "[dbg] %s epoch=%d K=%d outliers=%d n=%d\n",
                     task.id.c_str(), epoch, k, out, n);
      }
      PrototypeMemory memory = init_memory_from_clusters(
          features, labels, opt_.tau, opt_.momentum_alpha);
      memory.renormalize = opt_.renormalize_prototypes;

      const PrompterNet* theta = nullptr;
      const ColorStats* cas_target = nullptr;
      if (use_twins) {
        if (opt_.guidance == Guidance::Prompter) {
          int pick = draw_rng.below(static_cast<int>(result_.pool.entries.size()));
          theta = &result_.pool.entries[pick].second;
        } else {
          int pick = draw_rng.below(static_cast<int>(cas_entries.size()));
          cas_target = cas_entries[pick];
        }
      }

      std::vector<int> perm = batch_rng.permutation(n);
      int step = 0;
      for (int start = 0; start < n; start += opt_.batch_size, ++step) {
        int end = std::min(n, start + opt_.batch_size);
        std::vector<detail::BatchItem> items;
        int labeled = 0;
        for (int b = start; b < end; ++b)
          if (labels[perm[b]] != kOutlier) ++labeled;
        if (labeled == 0) continue;
        double w_orig = (use_twins ? 1.0 - lambda : 1.0) / labeled;
        double w_twin = lambda / labeled;
        for (int b = start; b < end; ++b) {
          int idx = perm[b];
          if (labels[idx] == kOutlier) continue;
          const Image& img = *working[idx];
          detail::GeoParams geo;
          if (detail::any_geo(opt_))
            geo = detail::draw_geo(opt_, img.height, img.width, aug_rng);
          detail::BatchItem item;
          item.label = labels[idx];
          item.weight = w_orig;
          item.grid = detail::any_geo(opt_)
                          ? pool_to_grid(detail::apply_geo(img, geo))
                          : grids[idx];
          items.push_back(std::move(item));
          if (use_twins) {
            Image twin =
                theta ? prompter_recover(*theta, img)
                      : (opt_.object_agnostic
                             ? object_agnostic_transfer(
                                   img, *cas_target,
                                   Region::frame(opt_.crop_fraction))
                             : transfer_to_stats(img, *cas_target));
            if (detail::any_geo(opt_)) twin = detail::apply_geo(twin, geo);
            detail::BatchItem t;
            t.label = labels[idx];
            t.weight = w_twin;
            t.is_twin = true;
            t.grid = pool_to_grid(twin);
            items.push_back(std::move(t));
          }
        }
        detail::BatchLoss bl =
            detail::train_batch(result_.embed, adam, memory, items);
        result_.losses.push_back({task.id, epoch, step, bl.total, bl.orig,
                                  bl.twin, bl.has_twin});
      }
    }

    // the task's own prompter joins the pool only now, after training
    PrompterTrainer prompter(PrompterNet::create(init_rng), opt_.prompter_lr);
    std::vector<Image> own;
    own.reserve(train.size());
    for (const auto& s : train) own.push_back(s.image);
    const int pn = static_cast<int>(own.size());
    for (int epoch = 0; epoch < opt_.prompter_epochs; ++epoch) {
      std::vector<int> perm = ptrain_rng.permutation(pn);
      int step = 0;
      for (int start = 0; start < pn; start += opt_.batch_size, ++step) {
        int end = std::min(pn, start + opt_.batch_size);
        std::vector<Image> batch;
        for (int b = start; b < end; ++b) batch.push_back(own[perm[b]]);
        double ploss = prompter.train_step(batch, ptrain_rng);
        result_.prompter_losses.push_back({task.id, epoch, step, ploss});
      }
    }
    result_.pool.append(task.id, prompter.prompter());
    store_camera_summary(task, train);
  }

  void store_camera_summary(const TaskSpec& task,
                            const std::vector<Sample>& train) {
    std::vector<LabImage> labs;
    std::vector<std::string> cams;
    labs.reserve(train.size());
    for (const auto& s : train) {
      labs.push_back(srgb_to_lab(s.image));
      cams.push_back(s.camera);
    }
    cas_store_.emplace_back(task.id, camera_summary(labs, cams));
  }

  void update_replay(const TaskSpec& task, const std::vector<Sample>& train) {
    Rng replay_rng = root_.fork("replay:" + task.id);
    for (const auto& s : train) {
      ++replay_seen_;
      if (static_cast<int>(replay_.size()) < opt_.replay_capacity) {
        replay_.push_back(s.image);
      } else {
        int j = replay_rng.below(static_cast<int>(
            std::min<std::int64_t>(replay_seen_, INT32_MAX)));
        if (j < opt_.replay_capacity) replay_[j] = s.image;
      }
    }
  }

  void evaluate_after(const TaskSpec& task, size_t index) {
    result_.audit.set_context(task.id, "eval");
    for (size_t j = 0; j <= index; ++j) {
      auto [query, gallery] =
          detail::load_eval_samples(opt_.tasks[j], root_, result_.audit);
      result_.evals.push_back(evaluate_checkpoint(result_.embed, query, gallery,
                                                  task.id, opt_.tasks[j].id));
    }
    for (const auto& u : opt_.unseen) {
      auto [query, gallery] = detail::load_eval_samples(u, root_, result_.audit);
      result_.evals.push_back(
          evaluate_checkpoint(result_.embed, query, gallery, task.id, u.id));
    }
  }

  void flush_report() const {
    if (opt_.out_dir.empty()) return;
    write_stream_report(result_, opt_);
  }

 public:
  static void write_stream_report(const StreamResult& result,
                                  const StreamOptions& opt) {
    namespace fs = std::filesystem;
    fs::create_directories(opt.out_dir);
    {
      std::ofstream os(fs::path(opt.out_dir) / "losses.csv");
      os << "task,epoch,step,total,orig,twin\n";
      for (const auto& r : result.losses) {
        os << r.task << "," << r.epoch << "," << r.step << ","
           << format_double(r.total) << "," << format_double(r.orig) << ",";
        if (r.has_twin) os << format_double(r.twin);
        os << "\n";
      }
    }
    {
      std::ofstream os(fs::path(opt.out_dir) / "prompter_losses.csv");
      os << "task,epoch,step,loss\n";
      for (const auto& r : result.prompter_losses)
        os << r.task << "," << r.epoch << "," << r.step << ","
           << format_double(r.loss) << "\n";
    }
    {
      std::ofstream os(fs::path(opt.out_dir) / "evals.csv");
      os << "model_after,eval_task,map,rank1,evaluated,skipped\n";
      for (const auto& r : result.evals)
        os << r.model_after << "," << r.eval_task << "," << format_double(r.map)
           << "," << format_double(r.rank1) << "," << r.evaluated << ","
           << r.skipped << "\n";
    }
    {
      std::ofstream os(fs::path(opt.out_dir) / "access_log.csv");
      result.audit.write_csv(os);
    }
    if (!result.pool.entries.empty())
      pool_save(result.pool, (fs::path(opt.out_dir) / "pool.bin").string());

    nlohmann::json summary;
    summary["seed"] = opt.seed;
    summary["guidance"] = opt.guidance == Guidance::Prompter ? "prompter" : "cas";
    summary["rehearsal"] = opt.rehearsal == Rehearsal::None
                               ? "none"
                               : (opt.rehearsal == Rehearsal::Transfer ? "transfer"
                                                                       : "replay");
    summary["lambda"] = opt.lambda;
    summary["epochs"] = opt.epochs;
    summary["tasks"] = result.task_ids;
    std::vector<std::string> pool_ids;
    for (const auto& [id, net] : result.pool.entries) pool_ids.push_back(id);
    summary["pool"] = pool_ids;
    summary["aborted"] = result.aborted;
    if (result.aborted) summary["abort_reason"] = result.abort_reason;
    if (!result.evals.empty() && !result.task_ids.empty()) {
      const std::string& last = result.task_ids.back();
      double map_sum = 0, rank1_sum = 0;
      int count = 0;
      for (const auto& r : result.evals) {
        if (r.model_after != last) continue;
        map_sum += r.map;
        rank1_sum += r.rank1;
        ++count;
      }
      if (count) {
        summary["final_average_map"] = map_sum / count;
        summary["final_average_rank1"] = rank1_sum / count;
      }
    }
    nlohmann::json eval_rows = nlohmann::json::array();
    for (const auto& r : result.evals)
      eval_rows.push_back({{"model_after", r.model_after},
                           {"eval_task", r.eval_task},
                           {"map", r.map},
                           {"rank1", r.rank1},
                           {"evaluated", r.evaluated},
                           {"skipped", r.skipped}});
    summary["evals"] = eval_rows;
    std::ofstream os(fs::path(opt.out_dir) / "summary.json");
    os << summary.dump(2) << "\n";
  }

 private:
  StreamOptions opt_;
  Rng root_;
  StreamResult result_;
  std::vector<std::pair<std::string, std::vector<CameraStats>>> cas_store_;
  std::vector<Image> replay_;
  std::int64_t replay_seen_ = 0;
};

inline StreamResult run_stream(const StreamOptions& opt) {
  return StreamRunner(opt).run();
}

// ------------------------------------------------------------- few-shot

// Retrain on a labeled task while steering transferred twins toward the
// color statistics of unlabeled reference images. Only reference pixels are
// consumed; augment_prob = 0 degenerates to a plain supervised finetune.
struct FewShotOptions {
  std::uint64_t seed = 1;
  int epochs = 10;
  int batch_size = 16;
  double lr = 2e-4;
  double lambda = 0.5;
  double augment_prob = 1.0;
  double tau = 0.05;
  double momentum_alpha = 0.2;
};

inline EmbedNet few_shot_style_adapt(EmbedNet model,
                                     const std::vector<Image>& references,
                                     const std::vector<Sample>& train_task,
                                     const FewShotOptions& opt) {
  if (opt.augment_prob < 0.0 || opt.augment_prob > 1.0)
    throw std::invalid_argument("few_shot: augment_prob must be in [0,1]");
  if (opt.augment_prob > 0.0 && references.empty())
    throw std::invalid_argument("few_shot: reference set is empty");
  if (train_task.empty()) throw std::invalid_argument("few_shot: no training data");

  std::vector<ColorStats> ref_stats;
  ref_stats.reserve(references.size());
  for (const auto& img : references) ref_stats.push_back(image_stats(srgb_to_lab(img)));

  std::vector<int> labels = detail::contiguous_labels(train_task);
  std::vector<std::vector<double>> grids;
  grids.reserve(train_task.size());
  for (const auto& s : train_task) grids.push_back(pool_to_grid(s.image));

  std::vector<std::vector<double>> features;
  for (const auto& g : grids) features.push_back(l2_normalize(model.net.forward(g)));
  PrototypeMemory memory =
      init_memory_from_clusters(features, labels, opt.tau, opt.momentum_alpha);

  Rng root(opt.seed);
  Rng batch_rng = root.fork("fewshot-batch");
  Rng aug_rng = root.fork("fewshot-aug");
  Adam adam(opt.lr);
  const int n = static_cast<int>(train_task.size());
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<int> perm = batch_rng.permutation(n);
    for (int start = 0; start < n; start += opt.batch_size) {
      int end = std::min(n, start + opt.batch_size);
      std::vector<detail::BatchItem> items;
      int count = end - start;
      for (int b = start; b < end; ++b) {
        int idx = perm[b];
        bool twin = opt.augment_prob > 0.0 && aug_rng.uniform() < opt.augment_prob;
        detail::BatchItem item;
        item.label = labels[idx];
        item.weight = (twin ? 1.0 - opt.lambda : 1.0) / count;
        item.grid = grids[idx];
        items.push_back(std::move(item));
        if (twin) {
          const ColorStats& target =
              ref_stats[aug_rng.below(static_cast<int>(ref_stats.size()))];
          detail::BatchItem t;
          t.label = labels[idx];
          t.weight = opt.lambda / count;
          t.is_twin = true;
          t.grid = pool_to_grid(transfer_to_stats(train_task[idx].image, target));
          items.push_back(std::move(t));
        }
      }
      detail::train_batch(model, adam, memory, items);
    }
  }
  return model;
}

// ------------------------------------------------------- config loading

namespace detail {

inline SynthSpec synth_spec_from_section(const ConfigSection& s) {
  SynthSpec spec;
  spec.height = static_cast<int>(s.get_int_or("height", 64));
  spec.width = static_cast<int>(s.get_int_or("width", 32));
  spec.identities = static_cast<int>(s.get_int_or("identities", 8));
  spec.images_per_identity = static_cast<int>(s.get_int_or("images_per_identity", 2));
  spec.jitter = s.get_double_or("jitter", 0.15);
  spec.pattern_strength = s.get_double_or("pattern_strength", 0.22);
  spec.texture_contrast = s.get_double_or("texture_contrast", 0.25);
  spec.pattern_classes = s.get_int_or("pattern_classes", 0);
  spec.eval_jitter = s.get_double_or("eval_jitter", -1.0);
  spec.eval_pixel_noise = s.get_double_or("eval_pixel_noise", -1.0);
  spec.tint_strength = s.get_double_or("tint_strength", 0.0);
  spec.texture_ids = s.get_int_or("texture_ids", -1);
  spec.pixel_noise = s.get_double_or("pixel_noise", 0.02);
  spec.texture_seed = static_cast<std::uint64_t>(s.get_int_or("texture_seed", 1));
  for (int k = 1;; ++k) {
    std::string base = "camera" + std::to_string(k);
    if (!s.has(base + ".mean")) break;
    SynthCamera cam;
    cam.id = s.get_or(base + ".id", "c" + std::to_string(k));
    cam.stats.mean = s.get_vec3(base + ".mean");
    cam.stats.stddev = s.get_vec3(base + ".std");
    spec.cameras.push_back(std::move(cam));
  }
  return spec;
}

inline TaskSpec task_spec_from_section(const ConfigSection& s) {
  TaskSpec t;
  t.id = s.get("name");
  t.supervised = s.get_bool_or("supervised", false);
  t.epochs = static_cast<int>(s.get_int_or("epochs", -1));
  t.lambda = s.get_double_or("lambda", -1.0);
  if (s.has("train_dir") || s.has("query_dir")) {
    t.use_synth = false;
    t.train_dir = s.get_or("train_dir", "");
    t.query_dir = s.get_or("query_dir", "");
    t.gallery_dir = s.get_or("gallery_dir", "");
    std::string naming = s.get_or("naming", "market");
    if (naming == "market") {
      t.naming = Naming::MarketStyle;
    } else if (naming == "manifest") {
      t.naming = Naming::Manifest;
    } else {
      throw std::runtime_error("config: unknown naming '" + naming + "'");
    }
  } else {
    t.use_synth = true;
    t.synth = synth_spec_from_section(s);
    if (t.synth.cameras.empty())
      throw std::runtime_error("config: task " + t.id +
                               " defines no cameraN.mean entries");
  }
  return t;
}

}  // namespace detail

inline StreamOptions stream_options_from_config(const Config& cfg) {
  StreamOptions opt;
  const ConfigSection& g = cfg.globals;
  opt.seed = static_cast<std::uint64_t>(g.get_int_or("seed", 1));
  opt.out_dir = g.get_or("out", "");
  std::string guidance = g.get_or("guidance", "prompter");
  if (guidance == "prompter") {
    opt.guidance = Guidance::Prompter;
  } else if (guidance == "cas") {
    opt.guidance = Guidance::Cas;
  } else {
    throw std::runtime_error("config: unknown guidance '" + guidance + "'");
  }
  std::string rehearsal = g.get_or("rehearsal", "transfer");
  if (rehearsal == "transfer") {
    opt.rehearsal = Rehearsal::Transfer;
  } else if (rehearsal == "none") {
    opt.rehearsal = Rehearsal::None;
  } else if (rehearsal == "replay") {
    opt.rehearsal = Rehearsal::Replay;
  } else {
    throw std::runtime_error("config: unknown rehearsal '" + rehearsal + "'");
  }
  opt.lambda = g.get_double_or("lambda", 0.5);
  opt.epochs = static_cast<int>(g.get_int_or("epochs", 12));
  opt.prompter_epochs = static_cast<int>(g.get_int_or("prompter_epochs", 8));
  opt.batch_size = static_cast<int>(g.get_int_or("batch", 16));
  opt.embed_lr = g.get_double_or("embed_lr", 2e-4);
  opt.prompter_lr = g.get_double_or("prompter_lr", 2e-4);
  opt.cluster_eps = g.get_double_or("eps", 0.5);
  opt.cluster_min_samples = static_cast<int>(g.get_int_or("min_samples", 4));
  opt.tau = g.get_double_or("tau", 0.05);
  opt.momentum_alpha = g.get_double_or("alpha", 0.2);
  opt.renormalize_prototypes = g.get_bool_or("renormalize", true);
  opt.replay_capacity = static_cast<int>(g.get_int_or("replay_capacity", 512));
  opt.shuffle_pretrain = g.get_bool_or("shuffle_pretrain", true);
  opt.object_agnostic = g.get_bool_or("object_agnostic", false);
  opt.crop_fraction = g.get_double_or("crop_fraction", 0.5);
  opt.flip = g.get_bool_or("flip", false);
  opt.crop = g.get_bool_or("crop", false);
  opt.erase = g.get_bool_or("erase", false);
  for (const ConfigSection* s : cfg.sections_named("task"))
    opt.tasks.push_back(detail::task_spec_from_section(*s));
  for (const ConfigSection* s : cfg.sections_named("unseen"))
    opt.unseen.push_back(detail::task_spec_from_section(*s));
  return opt;
}

}  // namespace cop
