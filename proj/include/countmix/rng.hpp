#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace countmix {

// Engine plus stream derivation. Distributions come from Boost.Random, whose
// algorithms are fixed in source, so draws are identical across platforms.
using Rng = std::mt19937_64;

inline constexpr std::string_view kGeneratorId = "mt19937_64+splitmix64/boost.random";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream `stream` of a run seeded with `seed`.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

}  // namespace countmix
