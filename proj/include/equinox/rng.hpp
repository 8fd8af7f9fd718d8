#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace equinox {

/// SplitMix64 generator. Used instead of <random> engines so that sampled
/// sequences are identical across standard libraries and so that independent
/// streams can be derived cheaply by key: adding a client to a scenario must
/// not perturb the other clients' arrival streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double strictly inside (0, 1); safe for inverse-CDF sampling.
  double uniform01_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const auto wide = static_cast<unsigned __int128>(next());
    return lo + static_cast<std::int64_t>((wide * span) >> 64);
  }

  /// Exponential inter-arrival sample with the given rate (events per unit).
  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

  /// Laplace(0, scale) sample; mean absolute deviation equals `scale`.
  double laplace(double scale) {
    const double u = uniform01_open() - 0.5;
    const double mag = -std::log1p(-2.0 * std::abs(u));
    return u < 0 ? -scale * mag : scale * mag;
  }

 private:
  std::uint64_t state_;
};

/// FNV-1a over a string, for deriving stream keys from names.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent stream derived from (seed, name, index).
inline Rng derive_stream(std::uint64_t seed, std::string_view name,
                         std::uint64_t index = 0) {
  return Rng(mix_keys(mix_keys(seed, fnv1a(name)), index));
}

}  // namespace equinox
