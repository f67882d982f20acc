#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tscast {

// splitmix64 generator. All randomness in the project flows through this type
// so that runs reproduce exactly across standard libraries and platforms
// (std::uniform_int_distribution et al. are implementation-defined).
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], inclusive, unbiased (Lemire with rejection).
  long uniform_int(long lo, long hi) {
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return lo + static_cast<long>(next_u64());  // full 64-bit range
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * range;
    uint64_t l = static_cast<uint64_t>(m);
    if (l < range) {
      uint64_t t = (0 - range) % range;
      while (l < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * range;
        l = static_cast<uint64_t>(m);
      }
    }
    return lo + static_cast<long>(m >> 64);
  }

  // Box-Muller; caches the second variate.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seed-splitting scheme: every module derives child seeds from the master
// seed, a scope tag, and up to three indices. Documented in the README.
inline uint64_t derive_seed(uint64_t master, std::string_view scope, uint64_t a = 0,
                            uint64_t b = 0, uint64_t c = 0) {
  Rng mix(master ^ fnv1a64(scope));
  uint64_t h = mix.next_u64();
  h ^= Rng(a + 0x1ull).next_u64();
  h ^= Rng(b + 0x2ull).next_u64() * 0x9e3779b97f4a7c15ull;
  h ^= Rng(c + 0x3ull).next_u64() * 0xc2b2ae3d27d4eb4full;
  return Rng(h).next_u64();
}

}  // namespace tscast
