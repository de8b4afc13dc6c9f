#pragma once

#include <cmath>
#include <cstdint>

namespace nlosloc {

// SplitMix64 (Steele, Lea & Flood's mix64 finalizer over a Weyl sequence).
// Picked because the whole update fits in three lines that any language can
// reproduce; determinism is bitwise within this implementation and
// statistical across reimplementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // One Box-Muller value per call; the sine branch is discarded so that
  // every call consumes exactly two raw draws.
  double gaussian(double sigma) {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return sigma * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

// Decorrelates substreams that share one user-facing seed. Each operation
// mixes its own tag so that, e.g., placement draws and noise draws never
// walk the same underlying sequence.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  Rng mix(base ^ (0xD1B54A32D192ED03ull * (stream + 1)));
  return mix.next_u64();
}

namespace streams {
constexpr std::uint64_t kPlacement = 1;
constexpr std::uint64_t kNoise = 2;
constexpr std::uint64_t kProbe = 3;
}  // namespace streams

}  // namespace nlosloc
