#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stablefield {

// Deterministic random source. The integer stream is std::mt19937_64 (its
// output sequence is pinned by the standard); all real-valued transforms are
// implemented here instead of std::*_distribution, whose algorithms are
// implementation-defined and would break reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1), never exactly 0 (safe under log()).
  double uniform_open() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare deviate is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = uniform_open();
    double v = uniform_open();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Exponential with unit mean.
  double exponential() { return -std::log(uniform_open()); }

  // Poisson count by inversion (product of uniforms); O(mean) but exact.
  std::uint64_t poisson(double mean) {
    std::uint64_t k = 0;
    double acc = 0.0;
    while (true) {
      acc += exponential();
      if (acc >= mean) return k;
      ++k;
    }
  }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the draw unbiased.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Independent stream derived from the base seed; substream(i) is stable
  // under reordering of draws on the parent.
  Rng substream(std::uint64_t idx) const { return Rng(mix(seed_, idx)); }

  // splitmix64 finalizer; decorrelates related seeds.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stablefield
