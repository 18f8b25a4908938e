#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cop {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t label_hash(std::string_view label) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace detail

// Deterministic generator with hand-rolled distributions so that a given
// seed yields the same draw sequence on every platform. Forked sub-streams
// derive from the original seed, not the consumed state, so the fork order
// and draw order of siblings never interact.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(detail::splitmix64(seed)) {}

  uint64_t next() { return gen_(); }

  // [0,1)
  double uniform() { return (next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without the usual pair cache: two uniforms per draw.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

  // uniform integer in [0,n), rejection-sampled
  int below(int n) {
    if (n <= 0) return 0;
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t bound = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next();
    } while (x >= bound);
    return static_cast<int>(x % un);
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = below(i + 1);
      std::swap(p[i], p[j]);
    }
    return p;
  }

  // Independent stream derived from the original seed and a label.
  Rng fork(uint64_t stream) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(stream + 1)));
  }

  Rng fork(std::string_view label) const {
    return fork(detail::label_hash(label));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace cop
