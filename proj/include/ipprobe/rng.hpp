#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ipprobe::rng {

using Engine = std::mt19937_64;

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for a named stage: splitmix64(root ^ fnv1a(name)).
constexpr std::uint64_t derive(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ fnv1a(name));
}

constexpr std::uint64_t derive(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace ipprobe::rng
