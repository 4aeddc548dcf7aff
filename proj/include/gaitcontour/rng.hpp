#pragma once

#include <cstdint>
#include <string_view>

namespace gaitcontour {

// splitmix64 finalizer; good avalanche, used to derive independent RNG
// streams from (seed, purpose, indices) without stream interference.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t s) { return splitmix64(s); }

inline std::uint64_t mix_seed(std::uint64_t s, std::string_view tag) {
  return splitmix64(s ^ fnv1a(tag));
}

template <class... Rest>
std::uint64_t mix_seed(std::uint64_t s, std::string_view tag, std::uint64_t i, Rest... rest) {
  std::uint64_t h = splitmix64(s ^ fnv1a(tag));
  h = splitmix64(h ^ i);
  if constexpr (sizeof...(rest) == 0)
    return h;
  else
    return mix_seed(h, rest...);
}

}  // namespace gaitcontour
