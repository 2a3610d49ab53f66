#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pricesense {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent child seeds so that
// parallel or reordered work stays bit-reproducible.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix_seed(mix_seed(parent) ^ (index + 0x632BE59BD9B4E019ULL));
}

// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t stable_hash(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng{mix_seed(seed)}; }

}  // namespace pricesense
