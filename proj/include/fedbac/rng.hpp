#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedbac/errors.hpp"

namespace fedbac {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// A named pseudo-random stream. Streams form a tree: child(path) derives an
// independent stream from this stream's identity and the path string, without
// consuming any state from the parent. All distributions are implemented on
// top of std::mt19937_64 (whose output sequence the standard fully specifies),
// so equal (seed, path) always reproduces the same draws.
class RngStream {
 public:
  static RngStream root(std::uint64_t seed) {
    return RngStream(detail::splitmix64(seed ^ 0x5fedbac5fedbac05ULL));
  }

  RngStream child(std::string_view path) const {
    return RngStream(detail::splitmix64(key_ ^ detail::fnv1a64(path)));
  }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw InputError("uniform_index: n must be positive");
    const std::uint64_t bound = n;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
  }

  // Standard normal via the Marsaglia polar method (no cached spare).
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * std::log(s) / s);
      }
    }
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(shape, 1) via Marsaglia-Tsang, with the power boost for shape < 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw InputError("gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = std::max(uniform(), 1e-300);
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(std::max(u, 1e-300)) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
        return d * v;
      }
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    const double s = x + y;
    return s > 0.0 ? x / s : 0.5;
  }

  // Index drawn with probability weights[i] / sum(weights).
  std::size_t categorical(std::span<const double> weights) {
    if (weights.empty()) throw InputError("categorical: empty weights");
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InputError("categorical: weights sum to zero");
    double r = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      r -= weights[i];
      if (r < 0.0) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  // A uniformly random k-subset of {0, ..., n-1}, returned sorted.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw InputError("sample_without_replacement: k > n");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(idx[j], idx[j + uniform_index(n - j)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  explicit RngStream(std::uint64_t key) : key_(key), engine_(key) {}

  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace fedbac
