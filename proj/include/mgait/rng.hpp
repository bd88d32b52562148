#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mgait {

// splitmix64: cheap stateless mixer used to derive independent stream seeds
// from (seed, salt...) tuples. Thread-independent and platform-stable.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t seed_mix(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

inline uint64_t seed_mix(uint64_t a, uint64_t b, uint64_t c) {
  return seed_mix(seed_mix(a, b), c);
}

inline uint64_t seed_mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return seed_mix(seed_mix(a, b, c), d);
}

// Deterministic RNG wrapper. Mapping from raw 64-bit draws to doubles is done
// by hand so results do not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  long uniform_int(long n) { return static_cast<long>(gen_() % static_cast<uint64_t>(n)); }

  // Standard normal via Box-Muller (deterministic, two draws per pair).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
      long j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mgait
