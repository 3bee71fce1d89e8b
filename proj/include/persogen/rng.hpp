#pragma once
// Seeded randomness. Everything downstream derives its entropy from explicit
// 64-bit seeds so a whole pipeline run is reproducible from one number.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace persogen {

// splitmix64 finalizer; whitens seeds and derives independent streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix64(mix64(mix64(base ^ mix64(a)) ^ mix64(b)) ^ mix64(c));
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t salt = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ mix64(salt);
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(mix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0,1), 53-bit resolution
  double uniform01() { return double(gen_() >> 11) * 0x1.0p-53; }

  // uniform integer in [0,n)
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    // Box-Muller on open-interval uniforms
    const double u1 = (double(gen_() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = double(gen_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace persogen
