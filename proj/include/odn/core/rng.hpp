#pragma once

#include <cstdint>
#include <random>

namespace odn {

using Rng = std::mt19937_64;

/// Seed for sample `index` of a run seeded with `master`. Generation order
/// never affects sample content because every sample owns its stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  // splitmix64 finalizer over a combination of both words
  std::uint64_t z = master ^ (index + 0x9e3779b97f4a7c15ULL + (master << 6) + (master >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace odn
