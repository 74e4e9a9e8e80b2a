#pragma once

// Portable seeded random streams.
//
// All randomness in the planner flows through Pcg32 (PCG-XSH-RR 64/32, the
// reference "pcg32" generator of O'Neill).  Distributions are implemented here
// rather than taken from <random> because libstdc++/libc++/MSVC produce
// different sequences for std::normal_distribution and friends, and traces
// must replay bit-exactly across toolchains.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace baseplace {

inline constexpr std::string_view kRngName = "pcg32-xsh-rr/splitmix64";

/// SplitMix64 finalizer; used to derive independent seeds from (seed, tag).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

/// FNV-1a over a short label, for turning names into stream tags.
constexpr std::uint64_t tag_of(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Pcg32 {
 public:
  using result_type = std::uint32_t;

  explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL,
                 std::uint64_t stream = 0xda3e39cb94b95bdbULL) {
    reseed(seed, stream);
  }

  void reseed(std::uint64_t seed, std::uint64_t stream) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
    has_spare_ = false;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u32(); }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    std::uint64_t hi = next_u32() >> 5;  // 27 bits
    std::uint64_t lo = next_u32() >> 6;  // 26 bits
    return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint32_t below(std::uint32_t bound) {
    if (bound <= 1) return 0;
    std::uint64_t m = std::uint64_t{next_u32()} * bound;
    auto low = static_cast<std::uint32_t>(m);
    if (low < bound) {
      std::uint32_t threshold = (-bound) % bound;
      while (low < threshold) {
        m = std::uint64_t{next_u32()} * bound;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Box-Muller transform; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent child stream; does not advance this generator.
  Pcg32 fork(std::uint64_t tag) const {
    return Pcg32(mix_seed(state_, tag), mix_seed(inc_, tag ^ 0x5bd1e995ULL));
  }

  friend bool operator==(const Pcg32&, const Pcg32&) = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stream for a named purpose derived from a trial seed.
inline Pcg32 stream_for(std::uint64_t seed, std::string_view purpose) {
  auto tag = tag_of(purpose);
  return Pcg32(mix_seed(seed, tag), tag);
}

}  // namespace baseplace
