#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace chargecast {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); equal arguments give equal
/// sequences regardless of call order or thread.
inline Rng make_substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9U};
  return Rng(seq);
}

inline void fill_standard_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out) v = normal(rng);
}

}  // namespace chargecast
