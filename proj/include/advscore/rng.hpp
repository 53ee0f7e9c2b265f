#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace advscore {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 1469598103934665603ULL) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

/// Derives an independent generator from a root seed, a stream name and an
/// index, so each component (env, actor-init, sampling, eval) can be
/// re-seeded without disturbing the others.
inline Rng make_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  const std::uint64_t h = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace advscore
