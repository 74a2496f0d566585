#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nmf {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named, indexed sub-stream of a master seed. Every random draw in the
/// library goes through one of these so runs are reproducible per stream.
inline Rng substream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(master ^ fnv1a(name));
  s = splitmix64(s ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  return Rng(s);
}

}  // namespace nmf
