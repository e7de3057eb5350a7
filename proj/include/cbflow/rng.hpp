#ifndef CBFLOW_RNG_HPP
#define CBFLOW_RNG_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>

// Counter-based splittable random streams. Every stream is identified by a
// key derived from (seed, replicate, column, step, tag); draws within a
// stream are indexed by an incrementing counter. Outputs never depend on
// scheduling, so parallel simulations reproduce bit-identically.

namespace cbflow {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct RngKey {
  std::uint64_t v = 0;
};

// Chained key derivation; chaining avoids the symmetric collisions a plain
// XOR of components would allow.
inline RngKey derive_key(std::uint64_t seed, std::uint64_t replicate,
                         std::uint64_t column = 0, std::uint64_t tag = 0) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ replicate);
  k = mix64(k ^ column);
  k = mix64(k ^ tag);
  return RngKey{k};
}

// Inverse of the standard normal CDF (Wichura's PPND16, accurate to ~1e-15).
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e+0) *
                  r +
              3.64784832476320460504e+0) *
                 r +
             5.76949722146069140550e+0) *
                r +
            4.63033784615654529590e+0) *
               r +
           1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e+0) *
                r +
            2.05319162663775882187e+0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e+0) *
                r +
            5.46378491116411436990e+0) *
               r +
           6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

class StreamRng {
 public:
  StreamRng(RngKey path_key, std::uint64_t step)
      : state_(mix64(path_key.v ^ (step * 0xd1b54a32d192ed03ULL))) {}

  explicit StreamRng(RngKey key) : state_(key.v) {}

  std::uint64_t next_u64() { return mix64(state_ += 0x9e3779b97f4a7c15ULL); }

  // Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform()); }

  // Exact Poisson sampling: sequential inversion below mean 10, Hormann's
  // transformed rejection (PTRS) above.
  std::uint64_t poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean))
      throw std::invalid_argument("poisson: bad mean");
    if (mean == 0.0) return 0;
    if (mean < 10.0) return poisson_inversion(mean);
    return poisson_ptrs(mean);
  }

  // Marsaglia-Tsang for shape >= 1, boosted by U^{1/shape} below 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: bad shape");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Noncentral chi-square with nu >= 0 degrees of freedom: a Poisson gamma
  // mixture; nu == 0 puts an atom at zero (exact extinction).
  double noncentral_chisq(double nu, double noncentrality) {
    if (nu < 0.0 || noncentrality < 0.0)
      throw std::invalid_argument("noncentral_chisq: bad parameters");
    const std::uint64_t k = noncentrality > 0.0 ? poisson(0.5 * noncentrality) : 0;
    const double shape = 0.5 * nu + static_cast<double>(k);
    if (shape == 0.0) return 0.0;
    return 2.0 * gamma(shape);
  }

 private:
  std::uint64_t poisson_inversion(double mean) {
    double p = std::exp(-mean);
    double s = p;
    const double u = uniform();
    std::uint64_t k = 0;
    while (u > s) {
      ++k;
      p *= mean / static_cast<double>(k);
      s += p;
      if (k > 2000) break;  // u in a region beyond double resolution of s
    }
    return k;
  }

  std::uint64_t poisson_ptrs(double lam) {
    const double slam = std::sqrt(lam);
    const double loglam = std::log(lam);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::abs(u);
      const double kd = std::floor((2.0 * a / us + b) * u + lam + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kd);
      if (kd < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          -lam + kd * loglam - std::lgamma(kd + 1.0))
        return static_cast<std::uint64_t>(kd);
    }
  }

  std::uint64_t state_;
};

}  // namespace cbflow

#endif  // CBFLOW_RNG_HPP
