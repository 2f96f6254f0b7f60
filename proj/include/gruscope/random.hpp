#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace gruscope {

// All randomness goes through mt19937_64 plus the helpers below, whose
// output is fixed by their definition rather than by the standard library's
// distribution implementations.
using Rng = std::mt19937_64;

__extension__ using Uint128 = unsigned __int128;

// Uniform index in [0, n) by multiply-shift of one 64-bit draw.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const Uint128 wide = static_cast<Uint128>(rng()) * static_cast<Uint128>(n);
  return static_cast<std::size_t>(wide >> 64);
}

// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

// Standard normal via Box-Muller (one value per call, second discarded).
double standard_normal(Rng& rng);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace gruscope
