#pragma once

// Deterministic random number generation.
//
// The engine is std::mt19937_64, whose output sequence is pinned by the
// standard.  The *mappings* from engine output to uniform/normal/categorical
// draws are implemented here by hand because std::uniform_real_distribution
// and std::normal_distribution are not required to produce identical streams
// across standard libraries.  Everything downstream (samplers, Monte Carlo
// harness) is therefore bit-reproducible given a seed, on any platform.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "triad/errors.hpp"

namespace triad {

// splitmix64 step; the standard cheap way to expand one seed into many.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable per-stream seed derivation: stream k of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
  std::uint64_t out = splitmix64(s);
  out ^= splitmix64(s);
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform on [0,1): 53 random bits scaled.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller with a cached second draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Chi-square with d degrees of freedom as a sum of squared normals.
  // Fine for the small d used here (d <= 100 or so).
  double chi_square(int d) {
    if (d <= 0) throw DimensionError("chi_square: degrees of freedom must be positive");
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double z = normal();
      s += z * z;
    }
    return s;
  }

  // Index draw from an unnormalized nonnegative weight vector.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DimensionError("categorical: weights must have positive sum");
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace triad
