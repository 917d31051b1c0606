#pragma once

#include <cstdint>
#include <random>

namespace wsnd {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tags for derived streams. New tags go at the end so existing
/// seeds keep reproducing the same numbers.
enum class Stream : std::uint64_t {
  Topology = 1,
  Channel = 2,
  EnergyH0 = 3,
  EnergyH1 = 4,
  MacNoise = 5,
  Theory = 6,
  Gaussian = 7,
};

/// Engine for the (seed, index, purpose) cell. A pure function of its
/// arguments, so trial streams are independent of evaluation order.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index, Stream purpose) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  k = splitmix64(k ^ static_cast<std::uint64_t>(purpose));
  const std::uint64_t k2 = splitmix64(k);
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                    static_cast<std::uint32_t>(k2), static_cast<std::uint32_t>(k2 >> 32)};
  return Rng(seq);
}

}  // namespace wsnd
