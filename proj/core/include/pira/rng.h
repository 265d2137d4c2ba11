#pragma once

#include <cmath>
#include <cstdint>

namespace pira {

// Counter-based pseudo-randomness. Every stream is a pure function of a
// 64-bit key, and keys are derived by hashing (parent, index...) tuples,
// so any draw in the project is reproducible from the run seed alone and
// independent of evaluation order.

inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_key(uint64_t key, uint64_t a) {
  return mix64(key ^ mix64(a + 0x165667b19e3779f9ull));
}

template <typename... Rest>
inline uint64_t derive_key(uint64_t key, uint64_t a, Rest... rest) {
  return derive_key(derive_key(key, a), static_cast<uint64_t>(rest)...);
}

// Stateless-core generator: value i of stream `key` is mix64(key ^ i).
// The struct only tracks how far the stream has been consumed.
struct CounterRng {
  uint64_t key = 0;
  uint64_t counter = 0;

  explicit CounterRng(uint64_t k = 0) : key(k) {}

  uint64_t next_u64() { return mix64(key ^ (0x2545f4914f6cdd1dull * ++counter)); }
  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // Uniform in [0, 1).
  float next_float() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, 1], endpoints reachable at 24-bit resolution.
  float next_float_closed() {
    return static_cast<float>(next_u32() >> 8) / 16777215.0f;
  }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Standard normal via the polar method (sqrt/log only, which are
  // correctly rounded in glibc; avoids sin/cos variability).
  double next_gaussian() {
    for (;;) {
      double u = 2.0 * next_double() - 1.0;
      double v = 2.0 * next_double() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
};

}  // namespace pira
