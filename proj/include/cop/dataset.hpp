#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/core.hpp"
#include "cop/raster.hpp"

namespace cop {

struct Sample {
  Image image;
  std::optional<int> identity;
  std::string camera;  // empty when unknown
  std::string source;  // path or synth tag
};

// Every pixel access by the training stack goes through the audit so a run
// can prove which task's images were touched, and in which phase.
class AccessAudit {
 public:
  struct Row {
    std::string source_task;
    std::string active_task;
    std::string phase;  // "train" or "eval"
    std::int64_t reads = 0;
  };

  void set_context(std::string active_task, std::string phase) {
    active_task_ = std::move(active_task);
    phase_ = std::move(phase);
  }

  void record(const std::string& source_task, std::int64_t n = 1) {
    counts_[{source_task, active_task_, phase_}] += n;
  }

  std::vector<Row> rows() const {
    std::vector<Row> out;
    for (const auto& [key, reads] : counts_) {
      const auto& [src, act, phase] = key;
      out.push_back({src, act, phase, reads});
    }
    return out;
  }

  std::int64_t reads(const std::string& source_task,
                     const std::string& active_task,
                     const std::string& phase) const {
    auto it = counts_.find({source_task, active_task, phase});
    return it == counts_.end() ? 0 : it->second;
  }

  // true iff no train-phase read ever touched an earlier task's images;
  // task order is the order of `task_ids`.
  bool train_reads_stay_in_task(const std::vector<std::string>& task_ids) const {
    std::map<std::string, size_t> rank;
    for (size_t i = 0; i < task_ids.size(); ++i) rank[task_ids[i]] = i;
    for (const auto& [key, reads] : counts_) {
      const auto& [src, act, phase] = key;
      if (phase != "train" || reads == 0) continue;
      auto s = rank.find(src);
      auto a = rank.find(act);
      if (s == rank.end() || a == rank.end()) continue;
      if (s->second < a->second) return false;
    }
    return true;
  }

  void write_csv(std::ostream& os) const {
    os << "source_task,active_task,phase,reads\n";
    for (const auto& [key, reads] : counts_) {
      const auto& [src, act, phase] = key;
      os << src << "," << act << "," << phase << "," << reads << "\n";
    }
  }

  const std::string& active_task() const { return active_task_; }
  const std::string& phase() const { return phase_; }

 private:
  // keyed map keeps the log exact and the CSV deterministic
  std::map<std::tuple<std::string, std::string, std::string>, std::int64_t>
      counts_;
  std::string active_task_ = "none";
  std::string phase_ = "train";
};

enum class Naming { MarketStyle, Manifest };

struct LoadReport {
  std::vector<Sample> samples;
  int skipped = 0;  // files present but not decodable / not parseable
};

namespace detail {

// <identity>_c<camera>s<seq>_<frame>_<k>.<ext>; identity may be negative
// (junk/distractor convention). Returns false when the name doesn't fit.
inline bool parse_market_name(const std::string& stem, int& identity,
                              int& camera) {
  size_t i = 0;
  bool neg = false;
  if (i < stem.size() && stem[i] == '-') {
    neg = true;
    ++i;
  }
  size_t digits = 0;
  long id = 0;
  while (i < stem.size() && std::isdigit(static_cast<unsigned char>(stem[i]))) {
    id = id * 10 + (stem[i] - '0');
    ++i;
    ++digits;
  }
  if (digits == 0) return false;
  if (i + 1 >= stem.size() || stem[i] != '_' || stem[i + 1] != 'c') return false;
  i += 2;
  size_t cam_digits = 0;
  long cam = 0;
  while (i < stem.size() && std::isdigit(static_cast<unsigned char>(stem[i]))) {
    cam = cam * 10 + (stem[i] - '0');
    ++i;
    ++cam_digits;
  }
  if (cam_digits == 0) return false;
  identity = static_cast<int>(neg ? -id : id);
  camera = static_cast<int>(cam);
  return true;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline LoadReport load_market_style(const std::string& dir,
                                    AccessAudit* audit = nullptr,
                                    const std::string& source_task = "") {
  namespace fs = std::filesystem;
  LoadReport report;
  if (!fs::exists(dir))
    throw std::runtime_error("dataset: no such directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!raster_extension(entry.path().string())) continue;
    paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    int identity = 0, camera = 0;
    std::string stem = fs::path(path).stem().string();
    if (!detail::parse_market_name(stem, identity, camera)) {
      ++report.skipped;
      continue;
    }
    Sample s;
    try {
      s.image = read_image(path);
    } catch (const std::exception&) {
      ++report.skipped;
      continue;
    }
    s.identity = identity;
    s.camera = "c" + std::to_string(camera);
    s.source = path;
    if (audit) audit->record(source_task.empty() ? path : source_task);
    report.samples.push_back(std::move(s));
  }
  return report;
}

// CSV manifest: header `path,identity,camera`; identity and camera may be
// blank. Paths resolve relative to the manifest location.
inline LoadReport load_manifest(const std::string& manifest_path,
                                AccessAudit* audit = nullptr,
                                const std::string& source_task = "") {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("dataset: cannot open " + manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  LoadReport report;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (!header_seen) {
      if (fields.size() != 3 || detail::trim(fields[0]) != "path" ||
          detail::trim(fields[1]) != "identity" ||
          detail::trim(fields[2]) != "camera")
        throw std::runtime_error("dataset: " + manifest_path + " line " +
                                 std::to_string(line_no) +
                                 ": expected header path,identity,camera");
      header_seen = true;
      continue;
    }
    if (fields.size() != 3)
      throw std::runtime_error("dataset: " + manifest_path + " line " +
                               std::to_string(line_no) + ": expected 3 fields, got " +
                               std::to_string(fields.size()));
    std::string rel = detail::trim(fields[0]);
    std::string id_text = detail::trim(fields[1]);
    std::string cam = detail::trim(fields[2]);
    if (rel.empty())
      throw std::runtime_error("dataset: " + manifest_path + " line " +
                               std::to_string(line_no) + ": empty path");
    Sample s;
    if (!id_text.empty()) {
      size_t used = 0;
      int id = 0;
      try {
        id = std::stoi(id_text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != id_text.size())
        throw std::runtime_error("dataset: " + manifest_path + " line " +
                                 std::to_string(line_no) +
                                 ": bad identity '" + id_text + "'");
      s.identity = id;
    }
    s.camera = cam;
    std::string full = fs::path(rel).is_absolute()
                           ? rel
                           : (base / rel).lexically_normal().string();
    try {
      s.image = read_image(full);
    } catch (const std::exception&) {
      ++report.skipped;
      continue;
    }
    s.source = full;
    if (audit) audit->record(source_task.empty() ? full : source_task);
    report.samples.push_back(std::move(s));
  }
  if (!header_seen)
    throw std::runtime_error("dataset: " + manifest_path + ": empty manifest");
  return report;
}

inline LoadReport load_directory(const std::string& path, Naming naming,
                                 AccessAudit* audit = nullptr,
                                 const std::string& source_task = "") {
  if (naming == Naming::MarketStyle)
    return load_market_style(path, audit, source_task);
  namespace fs = std::filesystem;
  std::string manifest = path;
  if (fs::is_directory(path)) manifest = (fs::path(path) / "manifest.csv").string();
  return load_manifest(manifest, audit, source_task);
}

}  // namespace cop
