#pragma once

#include <cstdint>

#include "pirsurf/common.hpp"

namespace pirsurf {

// PCG32 (O'Neill). Small, fast, and fully deterministic across platforms,
// which the seed contracts require; std::mt19937 would also work but its
// distributions are not bit-stable across standard libraries.
struct Pcg32 {
  std::uint64_t state = 0x853c49e6748fea9bULL;
  std::uint64_t inc = 0xda3e39cb94b95bdbULL;

  Pcg32() = default;
  Pcg32(std::uint64_t seed, std::uint64_t seq = 1) { reseed(seed, seq); }

  void reseed(std::uint64_t seed, std::uint64_t seq = 1) {
    state = 0;
    inc = (seq << 1u) | 1u;
    next_u32();
    state += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state;
    state = old * 6364136223846793005ULL + inc;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Uniform in [0, 1).
  real next_real() { return next_u32() * (1.0 / 4294967296.0); }

  // Uniform integer in [0, n).
  std::uint32_t next_below(std::uint32_t n) {
    return static_cast<std::uint32_t>((std::uint64_t(next_u32()) * n) >> 32);
  }

  // Standard normal via Box-Muller (no caching, two uniforms per draw).
  real next_gaussian() {
    real u1 = 1.0 - next_real();
    real u2 = next_real();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
};

// splitmix64 step, used to derive independent stream seeds from
// (base seed, step, purpose tag, index...) tuples.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t seed_of(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ b); }
inline std::uint64_t seed_of(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(seed_of(a, b) ^ c);
}
inline std::uint64_t seed_of(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix_seed(seed_of(a, b, c) ^ d);
}

inline real radical_inverse_vdc(std::uint32_t bits) {
  bits = (bits << 16u) | (bits >> 16u);
  bits = ((bits & 0x55555555u) << 1u) | ((bits & 0xAAAAAAAAu) >> 1u);
  bits = ((bits & 0x33333333u) << 2u) | ((bits & 0xCCCCCCCCu) >> 2u);
  bits = ((bits & 0x0F0F0F0Fu) << 4u) | ((bits & 0xF0F0F0F0u) >> 4u);
  bits = ((bits & 0x00FF00FFu) << 8u) | ((bits & 0xFF00FF00u) >> 8u);
  return bits * 2.3283064365386963e-10;
}

// Hammersley point set; scrambled by a seed-derived offset so different
// bakes decorrelate while staying reproducible.
inline Vec2 hammersley(std::uint32_t i, std::uint32_t n, std::uint32_t scramble = 0) {
  return {(i + 0.5) / n, radical_inverse_vdc(i ^ scramble)};
}

}  // namespace pirsurf
