// Errors, deterministic RNG and small shared helpers.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace srkd {

// Base class for all library errors. Subclasses map onto the CLI exit codes:
// config/parameter -> 2, data/io -> 3, numeric -> 4.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InvalidParameterError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class DataFormatError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Decorrelated seed for sub-stream `stream` of a run seeded with `seed`.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(0x9e3779b97f4a7c15ULL * (stream + 1)));
}

// Deterministic RNG with a draw counter so a stream can be checkpointed as
// (seed, draws) and restored exactly. Distributions are implemented by hand;
// <random> pins the mt19937_64 engine but not the distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  static Rng restore(std::uint64_t seed, std::uint64_t draws) {
    Rng r(seed);
    r.engine_.discard(draws);
    r.draws_ = draws;
    return r;
  }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes exactly two draws per call (no spare caching, which
  // would break (seed, draws) restoration).
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = (std::numeric_limits<std::uint64_t>::max() / n) * n;
    for (;;) {
      std::uint64_t x = next_u64();
      if (x < limit) return x % n;
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

// Fisher-Yates with the portable RNG above.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.bounded(i)]);
  }
}

// Shortest printf form that round-trips a double exactly.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace srkd
