#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/colorspace.hpp"
#include "cop/core.hpp"

namespace cop {

// First two moments of a lab image or image set, per channel.
struct ColorStats {
  Vec3 mean{0.0, 0.0, 0.0};
  Vec3 stddev{0.0, 0.0, 0.0};

  bool is_finite() const { return finite(mean) && finite(stddev); }
  bool operator==(const ColorStats& o) const {
    return mean == o.mean && stddev == o.stddev;
  }
};

enum class RegionKind { Full, Frame };

// Pixel selection for statistics. Frame keeps only pixels outside the
// centered box covering crop_fraction of each dimension; crop_fraction 0
// degenerates to Full.
struct Region {
  RegionKind kind = RegionKind::Full;
  double crop_fraction = 0.5;

  static Region full() { return {RegionKind::Full, 0.0}; }
  static Region frame(double crop) {
    if (crop < 0.0 || crop >= 1.0)
      throw std::invalid_argument("Region: crop_fraction must be in [0,1)");
    if (crop == 0.0) return full();
    return {RegionKind::Frame, crop};
  }
};

namespace detail {

struct CropBox {       // half-open row/col ranges of the excluded center
  int top, bottom, left, right;
  bool contains(int y, int x) const {
    return y >= top && y < bottom && x >= left && x < right;
  }
};

inline CropBox center_box(int height, int width, double crop_fraction) {
  int ch = static_cast<int>(std::lround(crop_fraction * height));
  int cw = static_cast<int>(std::lround(crop_fraction * width));
  ch = std::clamp(ch, 0, height);
  cw = std::clamp(cw, 0, width);
  int top = (height - ch) / 2;
  int left = (width - cw) / 2;
  return {top, top + ch, left, left + cw};
}

// Streaming moment accumulator; population (1/n) standard deviation.
struct MomentAccumulator {
  Vec3 sum{0, 0, 0};
  Vec3 sumsq{0, 0, 0};
  int64_t count = 0;

  void add(const Vec3& v) {
    for (int c = 0; c < 3; ++c) {
      sum[c] += v[c];
      sumsq[c] += v[c] * v[c];
    }
    ++count;
  }

  ColorStats stats() const {
    if (count == 0)
      throw std::runtime_error("statistics over an empty pixel selection");
    ColorStats s;
    for (int c = 0; c < 3; ++c) {
      double m = sum[c] / static_cast<double>(count);
      double var = sumsq[c] / static_cast<double>(count) - m * m;
      s.mean[c] = m;
      s.stddev[c] = std::sqrt(std::max(var, 0.0));
    }
    return s;
  }
};

}  // namespace detail

inline ColorStats image_stats(const LabImage& lab,
                              const Region& region = Region::full()) {
  detail::MomentAccumulator acc;
  if (region.kind == RegionKind::Full || region.crop_fraction == 0.0) {
    for (int y = 0; y < lab.height; ++y)
      for (int x = 0; x < lab.width; ++x) acc.add(lab.pixel(y, x));
  } else {
    auto box = detail::center_box(lab.height, lab.width, region.crop_fraction);
    for (int y = 0; y < lab.height; ++y)
      for (int x = 0; x < lab.width; ++x)
        if (!box.contains(y, x)) acc.add(lab.pixel(y, x));
  }
  return acc.stats();
}

// Grouping key for datasets that carry no camera labels. A camera summary
// over such a set collapses to a single guidance group.
inline const std::string kNoCameraId = "none";

struct CameraStats {
  std::string camera_id;
  ColorStats stats;
  int image_count = 0;
};

// Pools the pixels of every image per camera (Full region) and summarizes
// each pool. Output is ordered by camera id, so it is invariant to both
// image order and camera order.
inline std::vector<CameraStats> camera_summary(
    const std::vector<const LabImage*>& images,
    const std::vector<std::string>& camera_ids) {
  if (images.empty())
    throw std::invalid_argument("camera_summary: empty image list");
  if (images.size() != camera_ids.size())
    throw std::invalid_argument("camera_summary: size mismatch");
  std::map<std::string, std::pair<detail::MomentAccumulator, int>> groups;
  for (size_t i = 0; i < images.size(); ++i) {
    const std::string& id =
        camera_ids[i].empty() ? kNoCameraId : camera_ids[i];
    auto& [acc, n] = groups[id];
    const LabImage& lab = *images[i];
    for (int y = 0; y < lab.height; ++y)
      for (int x = 0; x < lab.width; ++x) acc.add(lab.pixel(y, x));
    ++n;
  }
  std::vector<CameraStats> out;
  out.reserve(groups.size());
  for (const auto& [id, group] : groups)
    out.push_back({id, group.first.stats(), group.second});
  return out;
}

inline std::vector<CameraStats> camera_summary(
    const std::vector<LabImage>& images,
    const std::vector<std::string>& camera_ids) {
  std::vector<const LabImage*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return camera_summary(ptrs, camera_ids);
}

// Spread floor for the re-sampling model: a homogeneous or singleton batch
// must still produce diverse draws.
inline constexpr double kSpreadFloor = 0.02;

// Per-component Gaussian over a batch of ColorStats: 6 centers and 6
// spreads. spread.mean[c] is the spread of the mean component c, and
// spread.stddev[c] the spread of the stddev component c.
struct StatDistribution {
  ColorStats center;
  ColorStats spread;
};

// Sample mean and sample (1/(n-1)) standard deviation per component,
// spreads floored at kSpreadFloor.
inline StatDistribution batch_stat_model(
    const std::vector<ColorStats>& batch) {
  if (batch.empty())
    throw std::invalid_argument("batch_stat_model: empty batch");
  const double n = static_cast<double>(batch.size());
  StatDistribution d;
  for (int c = 0; c < 3; ++c) {
    double sm = 0, ss = 0;
    for (const auto& s : batch) {
      sm += s.mean[c];
      ss += s.stddev[c];
    }
    d.center.mean[c] = sm / n;
    d.center.stddev[c] = ss / n;
  }
  for (int c = 0; c < 3; ++c) {
    double vm = 0, vs = 0;
    for (const auto& s : batch) {
      vm += (s.mean[c] - d.center.mean[c]) * (s.mean[c] - d.center.mean[c]);
      vs += (s.stddev[c] - d.center.stddev[c]) *
            (s.stddev[c] - d.center.stddev[c]);
    }
    double denom = n > 1 ? n - 1 : 1;
    d.spread.mean[c] = std::max(std::sqrt(vm / denom), kSpreadFloor);
    d.spread.stddev[c] = std::max(std::sqrt(vs / denom), kSpreadFloor);
  }
  return d;
}

enum class RgbChannel { R = 0, G = 1, B = 2 };

// Equal-width histogram over [0,1]; frequencies sum to 1.
struct Histogram {
  std::vector<double> freq;
  int bins() const { return static_cast<int>(freq.size()); }
};

inline Histogram channel_histogram(const std::vector<const Image*>& images,
                                   RgbChannel channel, int bins) {
  if (bins < 2) throw std::invalid_argument("channel_histogram: bins < 2");
  if (images.empty())
    throw std::invalid_argument("channel_histogram: empty image list");
  std::vector<int64_t> counts(bins, 0);
  int64_t total = 0;
  const int c = static_cast<int>(channel);
  for (const Image* img : images) {
    for (int y = 0; y < img->height; ++y)
      for (int x = 0; x < img->width; ++x) {
        double v = img->at(y, x, c);
        int b = static_cast<int>(v * bins);
        b = std::clamp(b, 0, bins - 1);
        ++counts[b];
        ++total;
      }
  }
  Histogram h;
  h.freq.resize(bins);
  for (int b = 0; b < bins; ++b)
    h.freq[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
  return h;
}

inline Histogram channel_histogram(const std::vector<Image>& images,
                                   RgbChannel channel, int bins) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return channel_histogram(ptrs, channel, bins);
}

// Wasserstein-1 distance between two histograms on [0,1]:
// integral of |CDF difference|.
inline double wasserstein1(const Histogram& a, const Histogram& b) {
  if (a.bins() != b.bins())
    throw std::invalid_argument("wasserstein1: bin count mismatch");
  double cdf_a = 0, cdf_b = 0, dist = 0;
  const double width = 1.0 / a.bins();
  for (int i = 0; i < a.bins(); ++i) {
    cdf_a += a.freq[i];
    cdf_b += b.freq[i];
    dist += std::abs(cdf_a - cdf_b) * width;
  }
  return dist;
}

// ---------------------------------------------------------------- text I/O

inline const char* kStatsCsvHeader =
    "l_mean,a_mean,b_mean,l_std,a_std,b_std";

inline void write_stats_csv(std::ostream& os, const ColorStats& s) {
  os << kStatsCsvHeader << "\n";
  os << format_double(s.mean[0]) << "," << format_double(s.mean[1]) << ","
     << format_double(s.mean[2]) << "," << format_double(s.stddev[0]) << ","
     << format_double(s.stddev[1]) << "," << format_double(s.stddev[2])
     << "\n";
}

inline ColorStats read_stats_csv(std::istream& is) {
  std::string header, row;
  if (!std::getline(is, header) || !std::getline(is, row))
    throw std::runtime_error("stats csv: missing header or data row");
  std::stringstream ss(row);
  std::string field;
  std::vector<double> vals;
  while (std::getline(ss, field, ','))
    vals.push_back(std::strtod(field.c_str(), nullptr));
  if (vals.size() != 6)
    throw std::runtime_error("stats csv: expected 6 fields");
  ColorStats s;
  for (int c = 0; c < 3; ++c) {
    s.mean[c] = vals[c];
    s.stddev[c] = vals[c + 3];
  }
  if (!s.is_finite()) throw std::runtime_error("stats csv: non-finite value");
  return s;
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_lo,bin_hi,frequency\n";
  const double width = 1.0 / h.bins();
  for (int b = 0; b < h.bins(); ++b)
    os << format_double(b * width) << "," << format_double((b + 1) * width)
       << "," << format_double(h.freq[b]) << "\n";
}

// Camera summaries as a key-value document, one block per camera id.
inline void write_camera_summary(std::ostream& os,
                                 const std::vector<CameraStats>& summary) {
  for (const auto& cs : summary) {
    os << "[camera " << cs.camera_id << "]\n";
    os << "images = " << cs.image_count << "\n";
    const char* names[6] = {"l_mean", "a_mean", "b_mean",
                            "l_std",  "a_std",  "b_std"};
    for (int c = 0; c < 3; ++c)
      os << names[c] << " = " << format_double(cs.stats.mean[c]) << "\n";
    for (int c = 0; c < 3; ++c)
      os << names[c + 3] << " = " << format_double(cs.stats.stddev[c]) << "\n";
  }
}

inline std::vector<CameraStats> read_camera_summary(std::istream& is) {
  std::vector<CameraStats> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("[camera ", 0) == 0 && line.back() == ']') {
      CameraStats cs;
      cs.camera_id = line.substr(8, line.size() - 9);
      out.push_back(cs);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || out.empty())
      throw std::runtime_error("camera summary: malformed line: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(value);
    CameraStats& cs = out.back();
    const char* names[6] = {"l_mean", "a_mean", "b_mean",
                            "l_std",  "a_std",  "b_std"};
    if (key == "images") {
      cs.image_count = std::atoi(value.c_str());
    } else {
      bool matched = false;
      for (int i = 0; i < 6; ++i) {
        if (key == names[i]) {
          double v = std::strtod(value.c_str(), nullptr);
          if (i < 3)
            cs.stats.mean[i] = v;
          else
            cs.stats.stddev[i - 3] = v;
          matched = true;
        }
      }
      if (!matched)
        throw std::runtime_error("camera summary: unknown key: " + key);
    }
  }
  return out;
}

}  // namespace cop
