#pragma once

#include <cmath>
#include <cstdint>

namespace diffrl {

// Counter-based splittable RNG. A stream is keyed by (seed, lane, sample) so
// adding lanes or reordering samples never perturbs other streams.
class RngStream {
 public:
  explicit RngStream(uint64_t seed, uint64_t lane = 0, uint64_t sample = 0) {
    state_ = mix(mix(mix(0x9e3779b97f4a7c15ULL ^ seed) + lane) + sample);
    if (state_ == 0) state_ = 0x2545f4914f6cdd1dULL;
    has_cached_ = false;
  }

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; deterministic draw order.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
  }

  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace diffrl
