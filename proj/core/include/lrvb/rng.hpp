#pragma once

#include <cstdint>
#include <random>

namespace lrvb {

/// Named random streams derived from one user seed.
enum class Stream : std::uint64_t { kSimulate = 1, kMcmc = 2, kMcmcReplicate = 3 };

/// SplitMix64 finalizer over (seed, stream, counter): independent, reproducible
/// sub-seeds for each component without sharing generator state.
constexpr std::uint64_t split_seed(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(stream) * 0x100000001ULL + counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
  return std::mt19937_64(split_seed(seed, stream, counter));
}

}  // namespace lrvb
