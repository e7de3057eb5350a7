// Acceptance gate: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cbflow/cumulant.hpp"
#include "cbflow/mc_harness.hpp"
#include "cbflow/mechanisms.hpp"
#include "cbflow/oracles.hpp"

using namespace cbflow;

namespace {

int failures = 0;

void line(int criterion, bool pass, const std::string& what) {
  std::printf("criterion %2d [%s] %s\n", criterion, pass ? "PASS" : "FAIL", what.c_str());
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

const CheckRow& row(const VerificationReport& rep, const std::string& name) {
  for (const auto& c : rep.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check row " + name);
}

void from_row(int criterion, const VerificationReport& rep, const std::string& name) {
  const CheckRow& c = row(rep, name);
  line(criterion, c.pass,
       name + fmt(": estimate=%.6f oracle=%.6f", c.estimate, c.oracle) +
           fmt(" se=%.2e allowance=%.3g", c.std_error, c.allowance));
}

}  // namespace

int main() {
  const auto wall0 = std::chrono::steady_clock::now();

  {  // 1: v_t(lambda) against the Riccati closed form, runtime < 1 s
    const auto t0 = std::chrono::steady_clock::now();
    const BranchingMechanism quadm = quadratic_mechanism();
    double err = 0.0;
    for (double t : {0.1, 0.5, 1.0, 2.0})
      for (double lambda : {0.5, 1.0, 2.0, 5.0})
        err = std::max(err,
                       std::abs(solve_v(quadm, lambda, t) - lambda / (1.0 + t * lambda)));
    const double dt = seconds_since(t0);
    line(1, err < 1e-8 && dt < 1.0,
         fmt("solve_v vs Riccati: max err=%.3e (tol 1e-8), %.2fs (<1s)", err, dt));
  }

  {  // 2: terminal-value solver against tanh, runtime < 1 s
    const auto t0 = std::chrono::steady_clock::now();
    const CumulantCurve u =
        solve_u(quadratic_mechanism(), StepFunction::constant(1.0, 0.0, 1.0));
    double err = 0.0;
    for (double s : {0.0, 0.25, 0.5, 0.9})
      err = std::max(err, std::abs(u.value(s) - std::tanh(1.0 - s)));
    const double dt = seconds_since(t0);
    line(2, err < 1e-8 && dt < 1.0,
         fmt("solve_u vs tanh: max err=%.3e (tol 1e-8), %.2fs (<1s)", err, dt));
  }

  {  // 3: flow-composition identities of the shift map, runtime < 5 s
    const auto t0 = std::chrono::steady_clock::now();
    const MechanismFamily fam = MechanismFamily::quadratic(1.0);
    const double p = 0.0, th = 0.25, q = 0.5;
    const StepFunction f = StepFunction::constant(1.0, 0.0, 1.0);
    const SolverOptions opts;  // step 1e-4
    const std::size_t pieces = 100000;  // 10x the solver resolution
    const CumulantCurve u_q = solve_u(fam.mechanism_at(q), f, opts);
    const StepFunction upq = resample_u_shift(fam, p, q, u_q, f, pieces);
    const CumulantCurve lhs49 = solve_u(fam.mechanism_at(p), upq, opts);
    const StepFunction uthq = resample_u_shift(fam, th, q, u_q, f, pieces);
    const CumulantCurve u_th = solve_u(fam.mechanism_at(th), uthq, opts);
    double err = 0.0;
    const double delta = 1.0 / static_cast<double>(pieces);
    for (int k = 0; k < 120; ++k) {
      const double s = (std::floor(k * static_cast<double>(pieces) / 121.0) + 0.5) * delta;
      err = std::max(err, std::abs(lhs49.value(s) - u_q.value(s)));
      err = std::max(err, std::abs(u_shift_value(fam, p, th, u_th, uthq, s) -
                                   u_shift_value(fam, p, q, u_q, f, s)));
    }
    const double dt = seconds_since(t0);
    line(3, err < 1e-6 && dt < 5.0,
         fmt("flow composition inner/two-step: max err=%.3e (tol 1e-6), %.2fs (<5s)", err, dt));
  }

  {  // 4: quadratic bridge identity and generator checks, runtime < 1 s
    const auto t0 = std::chrono::steady_clock::now();
    double bridge = 0.0;
    for (double s : {-1.0, 0.0, 1.0})
      for (double t : {-1.0, 0.0, 1.0}) {
        if (t < s) continue;
        for (double lambda : {0.5, 1.0, 2.0})
          bridge = std::max(
              bridge, std::abs(quad::u_minus(t - s, lambda) -
                               std::exp(2.0 * s) *
                                   quad::v_pq(-std::exp(-s), -std::exp(-t),
                                              std::exp(-2.0 * t) * lambda)));
      }
    double gen = 0.0;
    const double h = 1e-5;
    for (double t : {-0.5, 0.0, 0.5, 1.0})
      for (double lambda : {0.5, 1.0, 2.0}) {
        const double dm =
            (quad::u_minus(t + h, lambda) - quad::u_minus(t - h, lambda)) / (2.0 * h);
        const double dp =
            (quad::u_plus(t + h, lambda) - quad::u_plus(t - h, lambda)) / (2.0 * h);
        gen = std::max(gen, std::abs(dm + quad::phi_minus(quad::u_minus(t, lambda))));
        gen = std::max(gen, std::abs(dp + quad::phi_plus(quad::u_plus(t, lambda))));
      }
    const double dt = seconds_since(t0);
    line(4, bridge < 1e-12 && gen < 1e-6 && dt < 1.0,
         fmt("bridge err=%.3e (tol 1e-12), generator err=%.3e (tol 1e-6)", bridge, gen) +
             fmt(", %.2fs (<1s)", dt));
  }

  SuiteConfig scfg;
  scfg.seed = 1;

  const auto t_cbi = std::chrono::steady_clock::now();
  const VerificationReport cbi = run_suite("cbi-mc", scfg);
  const double cbi_seconds = seconds_since(t_cbi);

  const auto t_qf = std::chrono::steady_clock::now();
  const VerificationReport qf1 = run_suite("quadratic-flow", scfg);
  const double qf_seconds = seconds_since(t_qf);
  const VerificationReport qf2 = run_suite("quadratic-flow", scfg);

  {  // 5: explosion-time distribution, N=2e4, dt=1e-3, horizon 50, < 5 min
    const CheckRow& s1 = row(qf1, "explosion-survival-q0.1");
    const CheckRow& s2 = row(qf1, "explosion-survival-q0.25");
    const CheckRow& u1 = row(qf1, "undecided-fraction-q0.1");
    const CheckRow& u2 = row(qf1, "undecided-fraction-q0.25");
    const bool pass = s1.pass && s2.pass && u1.pass && u2.pass && qf_seconds < 300.0;
    line(5, pass,
         fmt("P{sigma(q)<inf}: q=0.1 est=%.4f (oracle %.4f), ", s1.estimate, s1.oracle) +
             fmt("q=0.25 est=%.4f (oracle %.4f), ", s2.estimate, s2.oracle) +
             fmt("undecided %.4f/%.4f (<0.005), suite %.0fs (<300s)", u1.estimate,
                 u2.estimate, qf_seconds));
  }

  {  // 6: marginal Laplace transform, N=1e5, dt=1e-3, runtime < 2 min
    const CheckRow& c = row(cbi, "marginal-laplace-x1-t1");
    line(6, c.pass && cbi_seconds < 120.0,
         fmt("E[e^-X_1]: est=%.5f oracle=%.5f se=%.2e", c.estimate, c.oracle,
             c.std_error) +
             fmt(", cbi-mc suite %.1fs (<120s)", cbi_seconds));
  }
  from_row(7, cbi, "mean-identity-x1-t1");
  from_row(8, cbi, "cbi-immigration-laplace");
  from_row(9, qf1, "totalmass-laplace-q0.5");
  from_row(10, qf1, "superprocess-laplace-t0.5");

  {  // 11: exact monotonicity across all flow replicates
    const CheckRow& m = row(qf1, "flow-monotonicity-violations");
    line(11, m.pass && m.estimate == 0.0,
         fmt("monotonicity violations: %.0f across %.0f replicate-flows", m.estimate,
             static_cast<double>(m.n)));
  }

  {  // 12: byte-identical reports for identical seeds
    const std::string a = report_json(qf1);
    const std::string b = report_json(qf2);
    line(12, a == b && !a.empty(),
         fmt("verify quadratic-flow --seed 1 twice: %.0f bytes, byte-identical=%.0f",
             static_cast<double>(a.size()), a == b ? 1.0 : 0.0));
  }

  std::printf("acceptance total: %.1fs, %d failure(s)\n", seconds_since(wall0), failures);
  return failures == 0 ? 0 : 1;
}
