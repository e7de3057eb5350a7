#ifndef CBFLOW_ORACLES_HPP
#define CBFLOW_ORACLES_HPP

#include <cmath>
#include <span>
#include <stdexcept>
#include <string_view>

#include "cbflow/cumulant.hpp"
#include "cbflow/mechanisms.hpp"
#include "cbflow/step_function.hpp"

// Closed-form predictions used as ground truth against Monte Carlo
// estimates: total-mass Laplace transforms via the right inverse of phi,
// the explosion-time distribution of the shifted family, and the quadratic
// special case.

namespace cbflow {

// P[e^{-lambda*sigma} 1_{sigma<inf}] = exp(-x*phi^{-1}(lambda)) for the
// total mass sigma = int_r^inf X_s ds of a CB-process started at x.
inline double sigma_laplace(const BranchingMechanism& mech, double x, double lambda) {
  if (x < 0.0) throw std::invalid_argument("sigma_laplace: x must be nonnegative");
  return std::exp(-x * mech.phi_inverse(lambda));
}

// CBI version: exp(-x*phi^{-1}(lambda) - psi(phi^{-1}(lambda)) int_r^inf rho).
inline double sigma_laplace_cbi(const BranchingMechanism& mech,
                                const ImmigrationMechanism& imm,
                                const StepFunction& rho, double x, double r,
                                double lambda) {
  if (x < 0.0 || r < 0.0)
    throw std::invalid_argument("sigma_laplace_cbi: x and r must be nonnegative");
  const double z = mech.phi_inverse(lambda);
  return std::exp(-x * z - imm.psi(z) * rho.tail_integral(r));
}

// Exponent of the total-mass transition law R_{p,q}(x,.):
//   x*phi_p(phi_q^{-1}(lambda)) + mu(p,q]*phi_q^{-1}(lambda).
inline double totalmass_transition_exponent(const MechanismFamily& family, double p,
                                            double q, double x, double mu_pq,
                                            double lambda) {
  if (p > q) throw std::invalid_argument("totalmass_transition_exponent: need p <= q");
  if (x < 0.0 || mu_pq < 0.0)
    throw std::invalid_argument("totalmass_transition_exponent: x, mu_pq must be nonnegative");
  const double z = family.phi_q_inverse(q, lambda);
  return x * family.phi_q(p, z) + mu_pq * z;
}

// P{A > q} = P{sigma(q) < inf} = exp(-mu*(q + phi^{-1}(phi(-q)))) for the
// shifted family started from the constant path mu.
inline double explosion_survival(const MechanismFamily& family, double mu, double q) {
  if (!family.is_shifted())
    throw std::invalid_argument("explosion_survival: shifted family required");
  if (mu < 0.0) throw std::invalid_argument("explosion_survival: mu must be nonnegative");
  return std::exp(-mu * family.phi_q_inverse(q, 0.0));
}

// P[sigma(theta) 1_{sigma(theta)<inf}] = mu*exp(-mu*(theta + zbar)) / phi'(zbar)
// with zbar = phi^{-1}(phi(-theta)).
inline double sigma_mean(const MechanismFamily& family, double mu, double theta) {
  if (!family.is_shifted())
    throw std::invalid_argument("sigma_mean: shifted family required");
  if (mu < 0.0) throw std::invalid_argument("sigma_mean: mu must be nonnegative");
  if (theta < 0.0 || theta > family.a())
    throw std::invalid_argument("sigma_mean: theta outside [0,a]");
  const BranchingMechanism& phi = family.base();
  const double zbar = phi.phi_inverse(phi.phi_analytic(-theta));
  const double d = phi.phi_prime_analytic(zbar);
  // The root finder returns zbar only to ~1e-12, so treat a slope below
  // 1e-9 as the critical singular set rather than dividing by noise.
  if (!(d > 1e-9))
    throw std::domain_error("sigma_mean: phi'(phi^{-1}(phi(-theta))) vanishes (critical theta)");
  return mu * std::exp(-mu * (theta + zbar)) / d;
}

// Closed forms of the quadratic family phi_q(l) = l^2 - 2ql and its
// time-changed total-mass processes.
namespace quad {

inline double v_pq(double p, double q, double lambda) {
  if (p > q) throw std::invalid_argument("quad::v_pq: need p <= q");
  if (q * q + lambda < 0.0) throw std::invalid_argument("quad::v_pq: q^2 + lambda < 0");
  return lambda + 2.0 * (q - p) * (std::sqrt(q * q + lambda) + q);
}

inline double u_minus(double t, double lambda) {
  const double e = std::exp(-t);
  return e * e * lambda + 2.0 * e * (1.0 - e) * (std::sqrt(1.0 + lambda) - 1.0);
}

inline double u_plus(double t, double lambda) {
  const double e = std::exp(t);
  return e * e * lambda + 2.0 * e * (e - 1.0) * (std::sqrt(1.0 + lambda) + 1.0);
}

inline double phi_minus(double z) { return 2.0 * z - 2.0 * (std::sqrt(1.0 + z) - 1.0); }

inline double phi_plus(double z) { return -2.0 * z - 2.0 * (std::sqrt(1.0 + z) + 1.0); }

}  // namespace quad

// Selector façade for the CLI: name in {v_pq,u_minus,u_plus,phi_minus,phi_plus}.
inline double quad_closed_form(std::string_view name, std::span<const double> args) {
  const auto need = [&](std::size_t n) {
    if (args.size() != n)
      throw std::invalid_argument("quad_closed_form: wrong argument count");
  };
  if (name == "v_pq") {
    need(3);
    return quad::v_pq(args[0], args[1], args[2]);
  }
  if (name == "u_minus") {
    need(2);
    return quad::u_minus(args[0], args[1]);
  }
  if (name == "u_plus") {
    need(2);
    return quad::u_plus(args[0], args[1]);
  }
  if (name == "phi_minus") {
    need(1);
    return quad::phi_minus(args[0]);
  }
  if (name == "phi_plus") {
    need(1);
    return quad::phi_plus(args[0]);
  }
  throw std::invalid_argument("quad_closed_form: unknown selector");
}

// Expected value of the CBI-process at time t; the first-moment ODE is
// solved exactly for a step immigration rate:
//   m(t) = e^{-bt} x0 + psi'(0) int_0^t e^{-b(t-s)} rho(s) ds.
inline double cbi_mean(const BranchingMechanism& mech, const ImmigrationMechanism& imm,
                       const StepFunction& rho, double x0, double t) {
  if (x0 < 0.0 || t < 0.0)
    throw std::invalid_argument("cbi_mean: x0 and t must be nonnegative");
  const double b = mech.b();
  double m = std::exp(-b * t) * x0;
  const double rate = imm.psi_prime0();
  if (rate > 0.0) {
    const auto& bp = rho.breakpoints();
    const auto& vals = rho.piece_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double s0 = std::min(bp[i], t);
      const double s1 = std::min(bp[i + 1], t);
      if (s1 <= s0 || vals[i] == 0.0) continue;
      double seg;
      if (b == 0.0)
        seg = s1 - s0;
      else
        seg = (std::exp(-b * (t - s1)) - std::exp(-b * (t - s0))) / b;
      m += rate * vals[i] * seg;
    }
  }
  return m;
}

// Log-Laplace exponent of the nonlocal branching immigration superprocess:
//   <mu, V_t f> + int_0^t psi(V_s f(0)) rho(s) ds,
// with mu given by its increasing distribution function evaluated on the
// grid of f (Stieltjes pairing: atoms mu(q_j) - mu(q_{j-1}) at q_j).
inline double superprocess_log_laplace(const MechanismFamily& family,
                                       const StepFunction& mu,
                                       const ImmigrationMechanism& imm,
                                       const StepFunction& rho, const GridFunction& f,
                                       double t, const SolverOptions& opts = {}) {
  if (t < 0.0) throw std::invalid_argument("superprocess_log_laplace: t must be nonnegative");
  std::vector<double> breaks;
  for (double b : rho.breakpoints())
    if (b > 0.0 && b < t) breaks.push_back(b);
  const VTrace trace = solve_V_trace(family, f, t, opts, breaks);

  const auto& grid = f.grid();
  double pairing = mu.value(grid.front()) * trace.final_values.front();
  for (std::size_t j = 1; j < grid.size(); ++j) {
    const double dmu = mu.value(grid[j]) - mu.value(grid[j - 1]);
    if (dmu < 0.0)
      throw std::invalid_argument("superprocess_log_laplace: mu must be increasing");
    pairing += dmu * trace.final_values[j];
  }

  double integral = 0.0;
  if (!imm.is_zero() && !rho.is_zero() && t > 0.0) {
    // Per-segment Simpson between rho breakpoints; solve_V_trace forced the
    // time grid to uniform even segments between these points.
    const auto& times = trace.times;
    std::vector<double> ends{0.0, t};
    ends.insert(ends.end(), breaks.begin(), breaks.end());
    std::sort(ends.begin(), ends.end());
    ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
    std::size_t lo = 0;
    for (std::size_t seg = 0; seg + 1 < ends.size(); ++seg) {
      std::size_t hi = lo;
      while (hi + 1 < times.size() && times[hi] != ends[seg + 1]) ++hi;
      const double rho_val = rho.value(0.5 * (ends[seg] + ends[seg + 1]));
      if (rho_val != 0.0 && hi > lo) {
        std::vector<double> g(hi - lo + 1);
        for (std::size_t i = lo; i <= hi; ++i)
          g[i - lo] = imm.psi(trace.value_at_origin[i]);
        integral += rho_val * detail::simpson(g.data(), g.size(), times[lo + 1] - times[lo]);
      }
      lo = hi;
    }
  }
  return pairing + integral;
}

}  // namespace cbflow

#endif  // CBFLOW_ORACLES_HPP
