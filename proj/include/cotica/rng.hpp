#pragma once

#include <cstdint>

namespace cotica {

// Deterministic 64-bit generator (splitmix64). All randomness in the project
// goes through this so runs reproduce bit-exactly across platforms and
// standard-library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n), n > 0.
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

 private:
  uint64_t state_;
};

// Stateless seed derivation, e.g. per (stream, domain, frame). Keeps every
// frame's randomness independent of generation order.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

}  // namespace cotica
