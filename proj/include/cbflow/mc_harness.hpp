#ifndef CBFLOW_MC_HARNESS_HPP
#define CBFLOW_MC_HARNESS_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cbflow/cumulant.hpp"
#include "cbflow/mechanisms.hpp"
#include "cbflow/oracles.hpp"
#include "cbflow/sde_sim.hpp"
#include "cbflow/step_function.hpp"

// Statistical estimators and the scripted verification suites comparing
// Monte Carlo functionals against the cumulant solvers and closed-form
// oracles. Estimation is a pure fold over replicate results: replicates run
// in parallel into preallocated slots and are reduced in index order, so
// reports are byte-identical for a given seed regardless of job count.

namespace cbflow {

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double undecided_fraction = 0.0;
  // Upper bracket when undecided paths are counted for the other hypothesis;
  // equal to (mean, std_error) when nothing is undecided.
  double mean_high = 0.0;
  double std_error_high = 0.0;
};

inline Estimate estimate_from_samples(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("estimate: need at least 2 samples");
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double x : xs) {
    ++k;
    const double d = x - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (x - mean);
  }
  Estimate e;
  e.n = xs.size();
  e.mean = mean;
  e.std_error = std::sqrt(m2 / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
  e.mean_high = e.mean;
  e.std_error_high = e.std_error;
  return e;
}

inline Estimate estimate_bracket(std::span<const double> low, std::span<const double> high,
                                 std::size_t undecided_count) {
  Estimate lo = estimate_from_samples(low);
  const Estimate hi = estimate_from_samples(high);
  lo.mean_high = hi.mean;
  lo.std_error_high = hi.std_error;
  lo.undecided_fraction =
      static_cast<double>(undecided_count) / static_cast<double>(low.size());
  return lo;
}

// Functionals of a path whose exponential moment is estimated:
//   value_at_time: exp(-lambda * X_t)
//   integral_f:    exp(-int f(s) X_s ds), trapezoid on the path grid
//   total_mass:    exp(-lambda * sigma) 1_{sigma < inf}; undecided paths
//                  contribute [0, exp(-lambda * accumulated)].
struct ExpFunctional {
  enum class Kind { value_at_time, integral_f, total_mass };
  Kind kind = Kind::value_at_time;
  double lambda = 1.0;
  double t = 0.0;
  StepFunction f;
};

struct ExpFunctionalValue {
  double low = 0.0;
  double high = 0.0;
  bool undecided = false;
};

inline ExpFunctionalValue exp_functional_value(const PathRecord& path,
                                               const ExpFunctional& fn) {
  ExpFunctionalValue out;
  switch (fn.kind) {
    case ExpFunctional::Kind::value_at_time: {
      const double v = std::exp(-fn.lambda * path.value_at_time(fn.t));
      out.low = out.high = v;
      break;
    }
    case ExpFunctional::Kind::integral_f: {
      double acc = 0.0;
      for (std::size_t i = 0; i + 1 < path.values.size(); ++i)
        acc += 0.5 *
               (fn.f.value(path.time(i)) * path.values[i] +
                fn.f.value(path.time(i + 1)) * path.values[i + 1]) *
               path.dt;
      const double v = std::exp(-acc);
      out.low = out.high = v;
      break;
    }
    case ExpFunctional::Kind::total_mass: {
      const TotalMass tm = total_mass(path);
      switch (tm.cls) {
        case MassClass::finite:
          out.low = out.high = std::exp(-fn.lambda * tm.value);
          break;
        case MassClass::infinite:
          out.low = out.high = 0.0;
          break;
        case MassClass::undecided:
          out.low = 0.0;
          out.high = std::exp(-fn.lambda * tm.value);
          out.undecided = true;
          break;
      }
      break;
    }
  }
  return out;
}

inline Estimate mc_exp_functional(std::span<const PathRecord> paths,
                                  const ExpFunctional& fn) {
  if (paths.size() < 2)
    throw std::invalid_argument("mc_exp_functional: need at least 2 paths");
  std::vector<double> low, high;
  low.reserve(paths.size());
  high.reserve(paths.size());
  std::size_t undecided = 0;
  for (const auto& p : paths) {
    const ExpFunctionalValue v = exp_functional_value(p, fn);
    low.push_back(v.low);
    high.push_back(v.high);
    undecided += v.undecided ? 1 : 0;
  }
  return estimate_bracket(low, high, undecided);
}

// Ratio-of-means estimator with the delta-method standard error, for
// conditional functionals P[G sigma 1_{fin}] / P[sigma 1_{fin}].
inline Estimate ratio_conditional(std::span<const double> numerator,
                                  std::span<const double> denominator) {
  if (numerator.size() != denominator.size() || numerator.size() < 2)
    throw std::invalid_argument("ratio_conditional: bad sample arrays");
  const Estimate den = estimate_from_samples(denominator);
  if (!(den.mean > 3.0 * den.std_error))
    throw std::domain_error("ratio_conditional: denominator not separated from 0");
  const Estimate num = estimate_from_samples(numerator);
  const double r = num.mean / den.mean;
  const std::size_t n = numerator.size();
  double s_aa = 0.0, s_ww = 0.0, s_aw = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = numerator[i] - num.mean;
    const double dw = denominator[i] - den.mean;
    s_aa += da * da;
    s_ww += dw * dw;
    s_aw += da * dw;
  }
  const double nn = static_cast<double>(n);
  const double var =
      (s_aa - 2.0 * r * s_aw + r * r * s_ww) / (nn - 1.0) / nn / (den.mean * den.mean);
  Estimate e;
  e.mean = r;
  e.std_error = var > 0.0 ? std::sqrt(var) : 0.0;
  e.n = n;
  e.mean_high = e.mean;
  e.std_error_high = e.std_error;
  return e;
}

template <class Fn>
inline void parallel_for_indexed(std::size_t n, int jobs, Fn&& fn) {
  std::size_t workers =
      jobs > 0 ? static_cast<std::size_t>(jobs)
               : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Verification suites

struct SuiteConfig {
  std::uint64_t seed = 0;
  int jobs = 0;               // 0: machine parallelism
  std::size_t n_override = 0;  // 0: per-suite defaults
  double dt_override = 0.0;
};

struct CheckRow {
  std::string name;
  double oracle = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double estimate_high = 0.0;
  double std_error_high = 0.0;
  double z = 0.0;
  double allowance = 0.0;
  std::size_t n = 0;
  double undecided = 0.0;
  bool pass = false;
};

struct VerificationReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or "excess-overflow"
  std::vector<CheckRow> checks;
  bool overall_pass = true;
};

namespace detail {

inline CheckRow exact_row(std::string name, double max_err, double allowance,
                          std::size_t n_points) {
  CheckRow r;
  r.name = std::move(name);
  r.oracle = 0.0;
  r.estimate = max_err;
  r.estimate_high = max_err;
  r.allowance = allowance;
  r.n = n_points;
  r.pass = max_err <= allowance;
  return r;
}

// z_crit = 3 plus an explicit discretization allowance; undecided paths are
// held against both hypotheses, so both bracket ends must sit inside the
// tolerance band.
inline CheckRow mc_row(std::string name, double oracle, const Estimate& e,
                       double allowance) {
  CheckRow r;
  r.name = std::move(name);
  r.oracle = oracle;
  r.estimate = e.mean;
  r.std_error = e.std_error;
  r.estimate_high = e.mean_high;
  r.std_error_high = e.std_error_high;
  r.z = e.std_error > 0.0 ? (e.mean - oracle) / e.std_error : 0.0;
  r.allowance = allowance;
  r.n = e.n;
  r.undecided = e.undecided_fraction;
  const bool low_ok = std::abs(e.mean - oracle) <= 3.0 * e.std_error + allowance;
  const bool high_ok =
      std::abs(e.mean_high - oracle) <= 3.0 * e.std_error_high + allowance;
  r.pass = low_ok && high_ok;
  return r;
}

inline VerificationReport suite_cumulant_closed_forms(const SuiteConfig& cfg) {
  VerificationReport rep;
  rep.suite = "cumulant-closed-forms";
  rep.seed = cfg.seed;
  const SolverOptions opts{cfg.dt_override > 0.0 ? cfg.dt_override : 1e-4, 1e12};
  const BranchingMechanism quadm = quadratic_mechanism();
  const MechanismFamily fam = MechanismFamily::quadratic(1.0);

  {  // v against the Riccati closed form
    double err = 0.0;
    std::size_t pts = 0;
    for (double t : {0.1, 0.5, 1.0, 2.0})
      for (double lambda : {0.5, 1.0, 2.0, 5.0}) {
        err = std::max(err, std::abs(solve_v(quadm, lambda, t, opts) -
                                     lambda / (1.0 + t * lambda)));
        ++pts;
      }
    rep.checks.push_back(exact_row("solve-v-riccati", err, 1e-8, pts));
  }
  {  // u against tanh
    const CumulantCurve u = solve_u(quadm, StepFunction::constant(1.0, 0.0, 1.0), opts);
    double err = 0.0;
    for (double s : {0.0, 0.25, 0.5, 0.9})
      err = std::max(err, std::abs(u.value(s) - std::tanh(1.0 - s)));
    rep.checks.push_back(exact_row("solve-u-tanh", err, 1e-8, 4));
  }
  {  // flow composition identities of the shift map
    const double p = 0.0, th = 0.25, q = 0.5;
    const StepFunction f = StepFunction::constant(1.0, 0.0, 1.0);
    const std::size_t pieces = static_cast<std::size_t>(std::llround(10.0 / opts.step));
    const CumulantCurve u_q = solve_u(fam.mechanism_at(q), f, opts);
    const StepFunction upq = resample_u_shift(fam, p, q, u_q, f, pieces);
    const CumulantCurve lhs49 = solve_u(fam.mechanism_at(p), upq, opts);
    const StepFunction uthq = resample_u_shift(fam, th, q, u_q, f, pieces);
    const CumulantCurve u_th = solve_u(fam.mechanism_at(th), uthq, opts);
    double e49 = 0.0, e410 = 0.0;
    const double delta = 1.0 / static_cast<double>(pieces);
    for (int k = 0; k < 120; ++k) {
      const double s =
          (std::floor(static_cast<double>(k) * static_cast<double>(pieces) / 121.0) + 0.5) *
          delta;
      e49 = std::max(e49, std::abs(lhs49.value(s) - u_q.value(s)));
      const double lhs = u_shift_value(fam, p, th, u_th, uthq, s);
      const double rhs = u_shift_value(fam, p, q, u_q, f, s);
      e410 = std::max(e410, std::abs(lhs - rhs));
    }
    rep.checks.push_back(exact_row("flow-composition-inner", e49, 1e-6, 120));
    rep.checks.push_back(exact_row("flow-composition-two-step", e410, 1e-6, 120));
  }
  {  // quadratic bridge identity and generator checks
    double err = 0.0;
    std::size_t pts = 0;
    for (double s : {-1.0, 0.0, 1.0})
      for (double t : {-1.0, 0.0, 1.0}) {
        if (t < s) continue;
        for (double lambda : {0.5, 1.0, 2.0}) {
          const double lhs = quad::u_minus(t - s, lambda);
          const double rhs = std::exp(2.0 * s) * quad::v_pq(-std::exp(-s), -std::exp(-t),
                                                            std::exp(-2.0 * t) * lambda);
          err = std::max(err, std::abs(lhs - rhs));
          ++pts;
        }
      }
    rep.checks.push_back(exact_row("bridge-identity", err, 1e-12, pts));

    const double h = 1e-5;
    double em = 0.0, ep = 0.0;
    for (double t : {-0.5, 0.0, 0.5, 1.0})
      for (double lambda : {0.5, 1.0, 2.0}) {
        const double dm =
            (quad::u_minus(t + h, lambda) - quad::u_minus(t - h, lambda)) / (2.0 * h);
        const double dp =
            (quad::u_plus(t + h, lambda) - quad::u_plus(t - h, lambda)) / (2.0 * h);
        em = std::max(em, std::abs(dm + quad::phi_minus(quad::u_minus(t, lambda))));
        ep = std::max(ep, std::abs(dp + quad::phi_plus(quad::u_plus(t, lambda))));
      }
    rep.checks.push_back(exact_row("generator-minus", em, 1e-6, 12));
    rep.checks.push_back(exact_row("generator-plus", ep, 1e-6, 12));
  }
  {  // semigroup property of v
    const BranchingMechanism withjumps(0.4, 0.8, JumpMeasure({{0.7, 0.5}, {2.0, 0.2}}));
    double err = 0.0;
    for (const BranchingMechanism* m : {&quadm, &withjumps})
      for (double r : {0.3, 0.7})
        for (double t : {0.3, 1.1})
          for (double lambda : {0.5, 2.0})
            err = std::max(err, std::abs(solve_v(*m, solve_v(*m, lambda, t, opts), r, opts) -
                                         solve_v(*m, lambda, r + t, opts)));
    rep.checks.push_back(exact_row("semigroup-v", err, 1e-7, 16));
  }
  {  // mean identity via the one-sided Richardson derivative at lambda = 0+
    const BranchingMechanism withjumps(0.5, 1.0, JumpMeasure({{1.0, 0.5}}));
    const double h = 1e-5;
    double err = 0.0;
    for (const BranchingMechanism* m : {&quadm, &withjumps})
      for (double t : {0.5, 1.0}) {
        const double d =
            (4.0 * solve_v(*m, h, t, opts) - solve_v(*m, 2.0 * h, t, opts)) / (2.0 * h);
        err = std::max(err, std::abs(d - std::exp(-m->b() * t)));
      }
    rep.checks.push_back(exact_row("mean-derivative", err, 1e-6, 4));
  }
  for (const auto& c : rep.checks) rep.overall_pass = rep.overall_pass && c.pass;
  return rep;
}

inline VerificationReport suite_cbi_mc(const SuiteConfig& cfg) {
  VerificationReport rep;
  rep.suite = "cbi-mc";
  rep.seed = cfg.seed;
  const std::size_t n = cfg.n_override > 0 ? cfg.n_override : 100000;
  const double dt = cfg.dt_override > 0.0 ? cfg.dt_override : 1e-3;
  const BranchingMechanism quadm = quadratic_mechanism();
  std::atomic<std::size_t> overflows{0};

  {  // marginal Laplace transform of the critical quadratic CB at t=1
    SimConfig sim;
    sim.dt = dt;
    sim.horizon = 1.0;
    sim.seed = cfg.seed;
    sim.stream_tag = 1;
    std::vector<double> vals(n);
    parallel_for_indexed(n, cfg.jobs, [&](std::size_t i) {
      SimConfig c = sim;
      c.replicate_index = i;
      const PathRecord p = simulate_cbi(quadm, ImmigrationMechanism(),
                                        StepFunction::zero(), 1.0, c);
      if (p.status == PathStatus::overflow) overflows.fetch_add(1);
      vals[i] = std::exp(-p.values.back());
    });
    const double oracle = std::exp(-solve_v(quadm, 1.0, 1.0));
    rep.checks.push_back(
        mc_row("marginal-laplace-x1-t1", oracle, estimate_from_samples(vals), 0.005));
  }
  {  // mean identity E[X_1] = x e^{-b}
    const BranchingMechanism mech(0.5, 1.0, JumpMeasure({{1.0, 0.5}}));
    SimConfig sim;
    sim.dt = dt;
    sim.horizon = 1.0;
    sim.seed = cfg.seed;
    sim.stream_tag = 2;
    std::vector<double> vals(n);
    parallel_for_indexed(n, cfg.jobs, [&](std::size_t i) {
      SimConfig c = sim;
      c.replicate_index = i;
      const PathRecord p =
          simulate_cbi(mech, ImmigrationMechanism(), StepFunction::zero(), 1.0, c);
      if (p.status == PathStatus::overflow) overflows.fetch_add(1);
      vals[i] = p.values.back();
    });
    const double oracle =
        cbi_mean(mech, ImmigrationMechanism(), StepFunction::zero(), 1.0, 1.0);
    rep.checks.push_back(
        mc_row("mean-identity-x1-t1", oracle, estimate_from_samples(vals), 0.01));
  }
  {  // CBI immigration oracle: x0=0, psi(u)=u, rho=1 on [0,1]
    const ImmigrationMechanism unit(1.0);
    const StepFunction rho = StepFunction::constant(1.0, 0.0, 1.0);
    SimConfig sim;
    sim.dt = dt;
    sim.horizon = 1.0;
    sim.seed = cfg.seed;
    sim.stream_tag = 3;
    std::vector<double> vals(n);
    parallel_for_indexed(n, cfg.jobs, [&](std::size_t i) {
      SimConfig c = sim;
      c.replicate_index = i;
      const PathRecord p = simulate_cbi(quadm, unit, rho, 0.0, c);
      if (p.status == PathStatus::overflow) overflows.fetch_add(1);
      vals[i] = std::exp(-p.values.back());
    });
    const double oracle =
        std::exp(-cbi_log_laplace(quadm, unit, rho, 0.0, 0.0, 1.0, 1.0));
    rep.checks.push_back(
        mc_row("cbi-immigration-laplace", oracle, estimate_from_samples(vals), 0.01));
  }
  const double overflow_fraction =
      static_cast<double>(overflows.load()) / static_cast<double>(3 * n);
  if (overflow_fraction > 0.01) {
    rep.status = "excess-overflow";
    rep.overall_pass = false;
  }
  for (const auto& c : rep.checks) rep.overall_pass = rep.overall_pass && c.pass;
  return rep;
}

inline VerificationReport suite_quadratic_flow(const SuiteConfig& cfg) {
  VerificationReport rep;
  rep.suite = "quadratic-flow";
  rep.seed = cfg.seed;
  const std::size_t n = cfg.n_override > 0 ? cfg.n_override : 20000;
  const double dt = cfg.dt_override > 0.0 ? cfg.dt_override : 1e-3;
  std::size_t mono_violations = 0;

  // Batch A: explosion-time distribution on the grid {0.1, 0.25} plus the
  // total-mass mean at theta = 0.25. The cap x_max = 1e3 decides survivors
  // well inside the 50-unit horizon (growth e^{2qt}) while false overflows
  // of extinct paths stay at the e^{-2 q x_max} scale.
  {
    const MechanismFamily fam = MechanismFamily::quadratic(0.25);
    const StepFunction mu = StepFunction::constant(1.0, 0.0, 1.0);
    const std::vector<double> q_grid{0.1, 0.25};
    SimConfig sim;
    sim.dt = dt;
    sim.horizon = 50.0;
    sim.x_max = 1e3;
    sim.seed = cfg.seed;
    sim.stream_tag = 10;
    struct Row {
      double fin[2], high[2];
      bool und[2];
      double sigma_mean;
      std::size_t mono;
    };
    std::vector<Row> rows(n);
    parallel_for_indexed(n, cfg.jobs, [&](std::size_t i) {
      SimConfig c = sim;
      c.replicate_index = i;
      const FlowRecord flow = simulate_flow(fam, mu, ImmigrationMechanism(),
                                            StepFunction::zero(), q_grid, c);
      Row& r = rows[i];
      for (int j = 0; j < 2; ++j) {
        const TotalMass tm = total_mass(flow.columns[j]);
        r.und[j] = tm.cls == MassClass::undecided;
        r.fin[j] = tm.cls == MassClass::finite ? 1.0 : 0.0;
        r.high[j] = tm.cls == MassClass::infinite ? 0.0 : 1.0;
        if (j == 1) r.sigma_mean = tm.cls == MassClass::finite ? tm.value : 0.0;
      }
      r.mono = flow_monotone_violations(flow);
    });
    for (int j = 0; j < 2; ++j) {
      std::vector<double> low(n), high(n);
      std::size_t und = 0;
      for (std::size_t i = 0; i < n; ++i) {
        low[i] = rows[i].fin[j];
        high[i] = rows[i].high[j];
        und += rows[i].und[j] ? 1 : 0;
      }
      const double q = q_grid[static_cast<std::size_t>(j)];
      const Estimate est = estimate_bracket(low, high, und);
      std::ostringstream name;
      name << "explosion-survival-q" << q;
      rep.checks.push_back(mc_row(name.str(), explosion_survival(fam, 1.0, q), est, 0.01));
      std::ostringstream uname;
      uname << "undecided-fraction-q" << q;
      CheckRow u;
      u.name = uname.str();
      u.oracle = 0.0;
      u.estimate = est.undecided_fraction;
      u.estimate_high = est.undecided_fraction;
      u.allowance = 0.005;
      u.n = n;
      u.undecided = est.undecided_fraction;
      u.pass = est.undecided_fraction < 0.005;
      rep.checks.push_back(u);
    }
    {
      std::vector<double> sm(n);
      for (std::size_t i = 0; i < n; ++i) sm[i] = rows[i].sigma_mean;
      rep.checks.push_back(mc_row("sigma-mean-theta0.25",
                                  sigma_mean(fam, 1.0, 0.25),
                                  estimate_from_samples(sm), 0.02));
    }
    for (std::size_t i = 0; i < n; ++i) mono_violations += rows[i].mono;
  }

  // Batch B: total-mass transition law at (p,q) = (0.2, 0.5), lambda = 1.
  {
    const MechanismFamily fam = MechanismFamily::quadratic(0.5);
    const StepFunction mu = StepFunction::constant(1.0, 0.0, 1.0);
    const std::vector<double> q_grid{0.2, 0.5};
    SimConfig sim;
    sim.dt = dt;
    sim.horizon = 50.0;
    sim.x_max = 1e3;
    sim.seed = cfg.seed;
    sim.stream_tag = 11;
    std::vector<double> low(n), high(n);
    std::vector<std::uint8_t> und(n, 0);
    std::vector<std::size_t> mono(n, 0);
    parallel_for_indexed(n, cfg.jobs, [&](std::size_t i) {
      SimConfig c = sim;
      c.replicate_index = i;
      const FlowRecord flow = simulate_flow(fam, mu, ImmigrationMechanism(),
                                            StepFunction::zero(), q_grid, c);
      ExpFunctional fn;
      fn.kind = ExpFunctional::Kind::total_mass;
      fn.lambda = 1.0;
      const ExpFunctionalValue v = exp_functional_value(flow.columns[1], fn);
      low[i] = v.low;
      high[i] = v.high;
      und[i] = v.undecided ? 1 : 0;
      mono[i] = flow_monotone_violations(flow);
    });
    std::size_t undc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      undc += und[i];
      mono_violations += mono[i];
    }
    const double oracle = std::exp(-1.0 * fam.phi_q_inverse(0.5, 1.0));
    rep.checks.push_back(mc_row("totalmass-laplace-q0.5", oracle,
                                estimate_bracket(low, high, undc), 0.01));
  }

  // Batch C: superprocess Laplace functional at t = 1/2 for f == 1 and
  // Lebesgue initial measure on [0, 1/2], cross-validating the flow against
  // the nonlocal cumulant solver. Lebesgue mu is discretized to atoms on the
  // flow grid and the same atoms feed the <mu, V_t f> pairing, so the two
  // sides describe the identical initial measure.
  {
    const MechanismFamily fam = MechanismFamily::quadratic(0.5);
    std::vector<double> flow_grid(11);
    for (int j = 0; j <= 10; ++j) flow_grid[static_cast<std::size_t>(j)] = 0.05 * j;
    std::vector<double> mu_breaks = flow_grid;
    mu_breaks.push_back(1.0);
    const StepFunction mu(mu_breaks, std::vector<double>(flow_grid.begin(), flow_grid.end()));
    const std::vector<double>& v_grid = flow_grid;
    SimConfig sim;
    sim.dt = std::min(dt, 2.5e-4);
    sim.horizon = 0.5;
    sim.seed = cfg.seed;
    sim.stream_tag = 12;
    std::vector<double> vals(n);
    std::vector<std::size_t> mono(n, 0);
    std::atomic<std::size_t> overflows{0};
    const std::vector<double> f_ones(flow_grid.size(), 1.0);
    parallel_for_indexed(n, cfg.jobs, [&](std::size_t i) {
      SimConfig c = sim;
      c.replicate_index = i;
      const FlowRecord flow = simulate_flow(fam, mu, ImmigrationMechanism(),
                                            StepFunction::zero(), flow_grid, c);
      for (const auto& col : flow.columns)
        if (col.status == PathStatus::overflow) {
          overflows.fetch_add(1);
          break;
        }
      vals[i] = std::exp(
          -stieltjes_pairing(flow, flow.columns.front().last_index(), f_ones));
      mono[i] = flow_monotone_violations(flow);
    });
    for (std::size_t i = 0; i < n; ++i) mono_violations += mono[i];
    const double exponent = superprocess_log_laplace(
        fam, mu, ImmigrationMechanism(), StepFunction::zero(),
        GridFunction::constant(v_grid, 1.0), 0.5);
    rep.checks.push_back(mc_row("superprocess-laplace-t0.5", std::exp(-exponent),
                                estimate_from_samples(vals), 0.01));
    if (static_cast<double>(overflows.load()) / static_cast<double>(n) > 0.01) {
      rep.status = "excess-overflow";
      rep.overall_pass = false;
    }
  }

  {
    CheckRow m;
    m.name = "flow-monotonicity-violations";
    m.oracle = 0.0;
    m.estimate = static_cast<double>(mono_violations);
    m.estimate_high = m.estimate;
    m.allowance = 0.0;
    m.n = 3 * n;
    m.pass = mono_violations == 0;
    rep.checks.push_back(m);
  }
  for (const auto& c : rep.checks) rep.overall_pass = rep.overall_pass && c.pass;
  return rep;
}

}  // namespace detail

inline VerificationReport run_suite(std::string_view name, const SuiteConfig& cfg = {}) {
  if (name == "cumulant-closed-forms") return detail::suite_cumulant_closed_forms(cfg);
  if (name == "cbi-mc") return detail::suite_cbi_mc(cfg);
  if (name == "quadratic-flow") return detail::suite_quadratic_flow(cfg);
  throw std::invalid_argument("run_suite: unknown suite '" + std::string(name) + "'");
}

inline std::vector<std::string> suite_names() {
  return {"cumulant-closed-forms", "cbi-mc", "quadratic-flow"};
}

inline std::string report_json(const VerificationReport& rep) {
  nlohmann::ordered_json j;
  j["suite"] = rep.suite;
  j["seed"] = rep.seed;
  j["status"] = rep.status;
  j["overall_pass"] = rep.overall_pass;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : rep.checks) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["oracle"] = c.oracle;
    jc["estimate"] = c.estimate;
    jc["std_error"] = c.std_error;
    jc["estimate_high"] = c.estimate_high;
    jc["std_error_high"] = c.std_error_high;
    jc["z"] = c.z;
    jc["allowance"] = c.allowance;
    jc["n"] = c.n;
    jc["undecided"] = c.undecided;
    jc["pass"] = c.pass;
    j["checks"].push_back(jc);
  }
  return j.dump(2) + "\n";
}

inline std::string report_text(const VerificationReport& rep) {
  std::ostringstream os;
  os << "suite " << rep.suite << " seed=" << rep.seed << " status=" << rep.status
     << "\n";
  for (const auto& c : rep.checks) {
    os << (c.pass ? "  PASS " : "  FAIL ") << c.name << "  oracle=" << c.oracle
       << " estimate=" << c.estimate;
    if (c.std_error > 0.0) os << " se=" << c.std_error;
    if (c.undecided > 0.0)
      os << " bracket=[" << c.estimate << "," << c.estimate_high << "]"
         << " undecided=" << c.undecided;
    os << " allowance=" << c.allowance << " n=" << c.n << "\n";
  }
  os << (rep.overall_pass ? "overall: PASS" : "overall: FAIL") << "\n";
  return os.str();
}

}  // namespace cbflow

#endif  // CBFLOW_MC_HARNESS_HPP
