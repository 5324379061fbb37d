#pragma once

// Counter-keyed splittable random streams plus the handful of samplers the
// simulation needs. Every stream is derived by hashing a (key, tag...) chain,
// so replicates, tree nodes and immigration streams draw from independent
// substreams regardless of scheduling order.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace bbsim::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Fold a tag into a key, producing the key of an independent substream.
inline std::uint64_t mix(std::uint64_t key, std::uint64_t tag) {
  std::uint64_t s = key + 0x9E3779B97F4A7C15ull * (tag + 1);
  return splitmix64(s);
}

inline std::uint64_t hash_string(std::uint64_t key, const char* s) {
  std::uint64_t h = key ^ 0xcbf29ce484222325ull;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ull;
  return mix(h, 0);
}

/// xoshiro256++ seeded from a 64-bit key via splitmix64.
class Stream {
 public:
  explicit Stream(std::uint64_t key) {
    std::uint64_t s = key;
    for (auto& w : state_) w = splitmix64(s);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0,1).
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on (0,1].
  double u01p() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log(u01p()) / rate; }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() {
    const double r = std::sqrt(-2.0 * std::log(u01p()));
    const double a = 6.283185307179586476925287 * u01();
    return r * std::cos(a);
  }

  std::int64_t poisson(double mean);
  double gamma(double shape, double scale);

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_;
};

inline std::int64_t Stream::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean < 10.0) {
    // Knuth's product method.
    const double limit = std::exp(-mean);
    double prod = 1.0;
    std::int64_t k = -1;
    do {
      prod *= u01p();
      ++k;
    } while (prod > limit);
    return k;
  }
  // Hormann's transformed rejection with squeeze (PTRS), valid for mean >= 10.
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    double u = u01() - 0.5;
    const double v = u01p();
    const double us = 0.5 - std::fabs(u);
    const double kr = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kr);
    if (kr < 0.0 || (us < 0.013 && v > us)) continue;
    const std::int64_t k = static_cast<std::int64_t>(kr);
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kr * log_mean - mean - std::lgamma(kr + 1.0)) {
      return k;
    }
  }
}

inline double Stream::gamma(double shape, double scale) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    // Boost by one and rescale with a uniform power.
    const double g = gamma(shape + 1.0, 1.0);
    return scale * g * std::pow(u01p(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = u01p();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return scale * d * v;
    }
  }
}

/// Rejection sampler for densities proportional to y^{-p} e^{-rate y} on
/// [lo, infinity). Covers jump-mass laws of all power-law Levy families.
/// Two-piece envelope: truncated power law below the pivot, shifted
/// exponential above it.
class TiltedPowerLaw {
 public:
  TiltedPowerLaw(double p, double rate, double lo) : p_(p), rate_(rate), lo_(lo) {
    if (!(rate > 0.0) || !(lo > 0.0) || !(p >= 0.0)) {
      throw std::invalid_argument("TiltedPowerLaw: need rate>0, lo>0, p>=0");
    }
    pivot_ = std::max(lo, 1.0 / rate);
    mass_a_ = pivot_ > lo ? std::exp(-rate * lo) * power_integral(lo, pivot_) : 0.0;
    mass_b_ = std::pow(pivot_, -p) * std::exp(-rate * pivot_) / rate;
    frac_a_ = mass_a_ / (mass_a_ + mass_b_);
  }

  double sample(Stream& rng) const {
    for (;;) {
      if (rng.u01() < frac_a_) {
        const double y = power_inverse(rng.u01());
        if (rng.u01p() <= std::exp(-rate_ * (y - lo_))) return y;
      } else {
        const double y = pivot_ + rng.exponential(rate_);
        if (rng.u01p() <= std::pow(pivot_ / y, p_)) return y;
      }
    }
  }

  double lower() const { return lo_; }

 private:
  double power_integral(double a, double b) const {
    if (p_ == 1.0) return std::log(b / a);
    return (std::pow(b, 1.0 - p_) - std::pow(a, 1.0 - p_)) / (1.0 - p_);
  }
  double power_inverse(double u) const {
    if (p_ == 1.0) return lo_ * std::pow(pivot_ / lo_, u);
    const double la = std::pow(lo_, 1.0 - p_);
    const double lb = std::pow(pivot_, 1.0 - p_);
    return std::pow(la + u * (lb - la), 1.0 / (1.0 - p_));
  }

  double p_, rate_, lo_;
  double pivot_, mass_a_, mass_b_, frac_a_;
};

}  // namespace bbsim::rng
