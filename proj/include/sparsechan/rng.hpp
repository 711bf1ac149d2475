#pragma once

#include <cstdint>
#include <random>

#include "sparsechan/core.hpp"

namespace sparsechan {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Good avalanche, cheap, and stable across platforms.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Purpose tags for substreams. A trial never shares a stream between two
/// purposes, so adding a method to a sweep does not perturb the channel or
/// noise draws of the others.
enum class Stream : std::uint64_t {
  channel = 1,
  pilot_noise = 2,
  pilots = 3,
  data = 4,
  aux = 5,
};

/// Derives the seed of substream (purpose, trial, sub) from a root seed.
/// Trials are reproducible independently of execution order.
constexpr std::uint64_t split_seed(std::uint64_t root, Stream purpose, std::uint64_t trial,
                                   std::uint64_t sub = 0) noexcept {
  std::uint64_t s = mix64(root);
  s = mix64(s ^ static_cast<std::uint64_t>(purpose));
  s = mix64(s ^ trial);
  return mix64(s ^ (sub * 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t root, Stream purpose, std::uint64_t trial,
                    std::uint64_t sub = 0) {
  return Rng(split_seed(root, purpose, trial, sub));
}

/// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline cplx complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

}  // namespace sparsechan
