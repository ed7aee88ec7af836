#pragma once

#include <cstdint>
#include <random>

#include "repudf/types.hpp"

namespace repudf {

// Deterministic random source. The generator is std::mt19937_64 (fully pinned
// by the standard), seeded through a SplitMix64 scramble so that nearby seeds
// and child streams decorrelate. All real-valued draws are built here from raw
// 64-bit words, never via std:: distributions, so sequences are identical
// across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  // Independent child stream; (seed, tag) -> child seed is pure, so the same
  // tag always yields the same stream.
  Rng split(std::uint64_t tag) const { return Rng(derive(seed_, tag)); }

  // The seed split() would hand the child, for call sites that take seeds.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1): top 53 bits of one word.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; draws two words per pair, caches the second value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vec3 normal_vec3() {
    Vec3 v;
    v << normal(), normal(), normal();
    return v;
  }

  Vec3 unit_vec3() {
    while (true) {
      Vec3 v = normal_vec3();
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds, unbiased via rejection
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t w = next_u64();
    while (w >= limit) w = next_u64();
    return lo + static_cast<int>(w % span);
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace repudf
