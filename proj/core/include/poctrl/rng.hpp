#pragma once

#include <cmath>
#include <cstdint>

#include "poctrl/errors.hpp"

// Counter-based random streams.  Every draw is a pure function of a 64-bit
// stream key and a 64-bit index, so simulations can partition work across
// threads arbitrarily, replay any particle's noise from any offset, and still
// produce bit-identical results.

namespace poctrl {
namespace rng {

// SplitMix64 finalizer, used to derive stream keys from (seed, tag, index...).
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t derive(uint64_t base, uint64_t word) {
  return mix64(mix64(base) + 0x9E3779B97F4A7C15ull * (word + 1));
}
inline uint64_t derive(uint64_t base, uint64_t w1, uint64_t w2) {
  return derive(derive(base, w1), w2);
}
inline uint64_t derive(uint64_t base, uint64_t w1, uint64_t w2, uint64_t w3) {
  return derive(derive(base, w1, w2), w3);
}

// Stream tags: one namespace per kind of noise a run consumes.
enum StreamTag : uint64_t {
  kTagCommonNoise = 1,   // shared observation path
  kTagPrivateNoise = 2,  // per-particle state noise
  kTagJumps = 3,         // action jump process
  kTagExperiment = 4,    // instance/measure sampling inside test harnesses
};

// Philox 4x32-10 block cipher (counter-based generator).
inline void philox_block(uint64_t key, uint64_t counter, uint32_t out[4]) {
  uint32_t c0 = uint32_t(counter), c1 = uint32_t(counter >> 32);
  uint32_t c2 = 0x2B5F4E1Du, c3 = 0x9DFE6632u;
  uint32_t k0 = uint32_t(key), k1 = uint32_t(key >> 32);
  for (int round = 0; round < 10; ++round) {
    uint64_t p0 = uint64_t(0xD2511F53u) * c0;
    uint64_t p1 = uint64_t(0xCD9E8D57u) * c2;
    uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
    uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
}

inline uint64_t bits64(uint64_t key, uint64_t index) {
  uint32_t b[4];
  philox_block(key, index, b);
  return (uint64_t(b[0]) << 32) | b[1];
}

// Uniform in (0, 1]: never 0, so log(u) is always finite.
inline double uniform01(uint64_t key, uint64_t index) {
  return double((bits64(key, index) >> 11) + 1) * 0x1.0p-53;
}

// Inverse of the standard normal CDF (Wichura's PPND16 rational
// approximations, accurate to ~1e-16 over (0,1)).
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
              6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
            1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
          1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double z;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    z = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        ((((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
               1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
             1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
           5.99832206555887937690e-1) * r + 1.0));
    z = num / den;
  }
  return q < 0.0 ? -z : z;
}

// Standard normal draw number `index` of the stream `key`.
inline double gaussian(uint64_t key, uint64_t index) {
  return normal_quantile(uniform01(key, index));
}

inline void fill_gaussians(uint64_t key, uint64_t start, int count, double* out) {
  for (int i = 0; i < count; ++i) out[i] = gaussian(key, start + uint64_t(i));
}

// Sequential uniform stream with a moving cursor; used where draws are
// consumed in data-dependent quantities (thinning, discrete marks).
struct UniformCursor {
  uint64_t key = 0;
  uint64_t next_index = 0;
  double next() { return uniform01(key, next_index++); }
};

}  // namespace rng

// The names every simulation consumer touches, hoisted out of the detail
// namespace so call sites stay short.
using rng::derive;
using rng::fill_gaussians;
using rng::gaussian;
using rng::kTagCommonNoise;
using rng::kTagExperiment;
using rng::kTagJumps;
using rng::kTagPrivateNoise;
using rng::StreamTag;
using rng::uniform01;
using rng::UniformCursor;

}  // namespace poctrl
