#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace seqrec {

using Rng = std::mt19937_64;

// splitmix64 finaliser
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream seed for a (global seed, key...) tuple, e.g. (seed, user, epoch).
inline std::uint64_t derive_seed(std::uint64_t global, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(global);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t global, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(global, keys));
}

}  // namespace seqrec
