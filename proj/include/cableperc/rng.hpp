#pragma once

// Counter-based splittable RNG. Every draw is a pure function of
// (master seed, replica index, purpose tag, draw key), so runs are
// bit-reproducible regardless of thread count or evaluation order.

#include <cmath>
#include <numbers>

#include "cableperc/common.hpp"

namespace cableperc::rng {

// Purpose tags. Values are part of the reproducibility contract: adding
// tags is fine, renumbering is a format break (bump kRngContractVersion).
inline constexpr u32 kRngContractVersion = 1;
enum Tag : u64 {
  TAG_REPLICA = 1,
  TAG_DGFF_NOISE = 2,
  TAG_HEATBATH = 3,
  TAG_EDGE_OPEN = 4,
  TAG_SOUP_COUNT = 5,
  TAG_SOUP_ROOT = 6,
  TAG_SOUP_STEP = 7,
  TAG_VISIT_TIME = 8,
  TAG_POINT_TIME = 9,
  TAG_GLUE_EDGE = 10,
  TAG_CLUSTER_SIGN = 11,
  TAG_BRIDGE_PATH = 12,
  TAG_EDGE_LOOPS = 13,
  TAG_GENERIC = 14,
};

inline u64 split_mix(u64 z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline u64 keyed_u64(u64 seed, u64 a, u64 b = 0, u64 c = 0) {
  u64 h = split_mix(seed ^ 0x243f6a8885a308d3ULL);
  h = split_mix(h ^ a);
  h = split_mix(h ^ b);
  h = split_mix(h ^ c);
  return h;
}

/// Sub-seed for one replica; per-replica draws then key off this.
inline u64 replica_seed(u64 master, u64 replica) {
  return keyed_u64(master, TAG_REPLICA, replica);
}

inline double to_u01(u64 h) {  // in (0,1), never 0
  return (static_cast<double>(h >> 11) + 0.5) * 0x1p-53;
}

inline double keyed_u01(u64 seed, u64 a, u64 b = 0, u64 c = 0) {
  return to_u01(keyed_u64(seed, a, b, c));
}

inline double keyed_gaussian(u64 seed, u64 a, u64 b = 0, u64 c = 0) {
  const double u1 = keyed_u01(seed, a, b, c);
  const double u2 = to_u01(keyed_u64(seed ^ 0x5851f42d4c957f2dULL, a, b, c));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

inline double keyed_exponential(u64 seed, u64 a, u64 b = 0, u64 c = 0) {
  return -std::log(keyed_u01(seed, a, b, c));
}

/// Sequential stream for variable-draw algorithms (rejection loops etc.).
/// Stream identity is (seed, a, b, c); consumption order is sequential.
class KeyStream {
 public:
  KeyStream(u64 seed, u64 a, u64 b = 0, u64 c = 0)
      : state_(keyed_u64(seed, a, b, c)) {}

  u64 next_u64() { return split_mix(state_ += 0x9e3779b97f4a7c15ULL); }
  double u01() { return to_u01(next_u64()); }
  double gaussian() {
    const double u1 = u01(), u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }
  double exponential() { return -std::log(u01()); }

  /// Uniform integer in [0, n), unbiased (multiply-shift with rejection).
  u64 below(u64 n) {
    // Lemire's method.
    u64 x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    u64 lo = static_cast<u64>(m);
    if (lo < n) {
      const u64 t = (-n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<u64>(m);
      }
    }
    return static_cast<u64>(m >> 64);
  }

  /// Gamma(shape, scale). shape==0.5 uses the exact chi-square(1)/2 path.
  double gamma(double shape, double scale) {
    if (shape == 0.5) {
      const double z = gaussian();
      return 0.5 * z * z * scale;
    }
    if (shape < 1.0) {
      // Boost by U^{1/shape} from shape+1 (Marsaglia-Tsang).
      const double u = u01();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = u01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v * scale;
    }
  }

  u64 poisson(double lambda);

 private:
  u64 state_;
};

inline u64 KeyStream::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda < 10.0) {
    // Knuth inversion by product of uniforms.
    const double limit = std::exp(-lambda);
    u64 n = 0;
    double prod = u01();
    while (prod > limit) {
      ++n;
      prod *= u01();
    }
    return n;
  }
  // PTRD transformed rejection (Hoermann 1993), exact for large lambda.
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = u01() - 0.5;
    const double v = u01();
    const double us = 0.5 - std::fabs(u);
    const double kr = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<u64>(kr);
    if (kr < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kr * loglam - lambda - std::lgamma(kr + 1.0)) {
      return static_cast<u64>(kr);
    }
  }
}

}  // namespace cableperc::rng
