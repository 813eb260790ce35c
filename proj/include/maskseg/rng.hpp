#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace maskseg {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a base seed and a list of tags
// (iteration, stream id, image index, ...). Stateless, so any draw can be
// reproduced from its coordinates alone.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace maskseg
