#pragma once

#include <cstdint>
#include <initializer_list>

namespace crush {

// SplitMix64 finalizer. Used as the mixing function of the counter-based
// streams below.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Hash an ordered list of words into one 64-bit value. Every random draw in
// the simulation is `hash_words({seed, stream, agent, tick, ...})`, so the
// result never depends on evaluation order or thread scheduling.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

// Uniform double in [0, 1) from the top 53 bits.
constexpr double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Named stream identifiers, so distinct uses of the same (agent, tick) never
// collide.
enum class Stream : std::uint64_t {
  Separation = 1,
  Subset = 2,
};

}  // namespace crush
