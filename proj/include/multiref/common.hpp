#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace multiref {

/// Raised for malformed configuration or incompatible settings (CLI exit 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised for malformed or unusable input data (CLI exit 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t combine_seed(uint64_t seed, uint64_t stream) {
  return mix64(seed ^ mix64(stream));
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Deterministic RNG used everywhere. Wraps xoshiro-style mixing of a
/// splitmix64 stream so that draws are identical across platforms and
/// standard-library versions (std::normal_distribution is not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Index draw from an (assumed normalized) probability vector.
  template <class Vec>
  int categorical(const Vec& probs) {
    double u = uniform();
    double cum = 0.0;
    int last = 0;
    for (int i = 0; i < int(probs.size()); ++i) {
      if (probs[i] <= 0.0) continue;
      cum += probs[i];
      last = i;
      if (u < cum) return i;
    }
    return last;  // numeric runoff
  }

  /// Fisher-Yates shuffle, deterministic given the stream state.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace multiref
