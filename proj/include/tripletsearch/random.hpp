#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace tripletsearch {

using Rng = std::mt19937_64;

/// Independent generator per (seed, stream) so that model init, data
/// generation and sampling never share a sequence.
inline Rng make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

/// Uniform in [0, n); n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double uniform_unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

namespace rng_stream {
inline constexpr std::uint32_t kModelInit = 1;
inline constexpr std::uint32_t kSynthetic = 2;
inline constexpr std::uint32_t kSplit = 3;
inline constexpr std::uint32_t kSampler = 4;
}  // namespace rng_stream

}  // namespace tripletsearch
