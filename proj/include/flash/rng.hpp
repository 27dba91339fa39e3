#pragma once

// Deterministic, splittable random number generator used everywhere in this
// library.  The core is SplitMix64 (Steele, Lea and Flood; public domain):
// a 64-bit counter advanced by a fixed odd constant, with a finalizing mix.
// It is platform independent, trivially seedable, and two generators created
// from different (seed, stream) pairs behave as independent streams, which is
// what the experiment drivers rely on for reproducibility.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace flash {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(detail::mix64(seed + kGolden)) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return detail::mix64(state_);
  }

  // Child generator independent of the parent stream.  Does not advance the
  // parent, so rng.child(k) is a pure function of (current state, k).
  Rng child(std::uint64_t label) const {
    return Rng(detail::mix64(state_ ^ detail::mix64(label + kGolden)));
  }

  // Uniform on [0, 1), 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe as a log() argument.
  double uniform_open() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int rademacher() { return (next_u64() & 1u) ? 1 : -1; }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> unit_vector(Eigen::Index d) {
    if (d <= 0) throw std::invalid_argument("Rng::unit_vector: d must be positive");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v(d);
    for (;;) {
      for (Eigen::Index i = 0; i < d; ++i) v[i] = static_cast<Scalar>(normal());
      const Scalar norm = v.norm();
      if (norm > Scalar(1e-12)) return v / norm;
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace flash
