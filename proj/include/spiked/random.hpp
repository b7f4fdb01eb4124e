#pragma once

#include <cstdint>
#include <random>

namespace spiked {

using Rng = std::mt19937_64;

// Fixed stream offsets so that one user seed fans out into independent,
// reproducible generators.
enum class Stream : std::uint64_t {
  signal = 1,
  eigenvalues = 2,
  basis = 3,
  init = 4,
  power_iteration = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL));
}

inline Rng make_rng(std::uint64_t seed, Stream stream) { return Rng(stream_seed(seed, stream)); }

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace spiked
