#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cbflow/mc_harness.hpp"
#include "cbflow/rng.hpp"

using namespace cbflow;

TEST_CASE("basic estimates") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const Estimate e = estimate_from_samples(xs);
  CHECK(e.mean == doctest::Approx(2.5));
  // sample sd = sqrt(5/3), se = sd/2
  CHECK(e.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(e.n == 4);
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(estimate_from_samples(one), std::invalid_argument);
}

static PathRecord flat_path(double level, std::size_t n, PathStatus st) {
  PathRecord p;
  p.dt = 0.1;
  p.values.assign(n + 1, level);
  p.status = st;
  p.stop_index = st == PathStatus::alive_at_horizon ? n : n / 2;
  if (st == PathStatus::absorbed)
    for (std::size_t i = p.stop_index; i <= n; ++i) p.values[i] = 0.0;
  return p;
}

TEST_CASE("exp-functional estimators") {
  std::vector<PathRecord> zeros(5, flat_path(0.0, 10, PathStatus::absorbed));
  ExpFunctional at_t;
  at_t.kind = ExpFunctional::Kind::value_at_time;
  at_t.lambda = 2.0;
  at_t.t = 0.5;
  Estimate e = mc_exp_functional(zeros, at_t);
  CHECK(e.mean == 1.0);
  CHECK(e.std_error == 0.0);

  // lambda = 0 gives exactly 1 whatever the paths do.
  std::vector<PathRecord> alive_paths;
  for (int i = 0; i < 4; ++i)
    alive_paths.push_back(flat_path(1.0 + i, 10, PathStatus::alive_at_horizon));
  at_t.lambda = 0.0;
  CHECK(mc_exp_functional(alive_paths, at_t).mean == 1.0);

  // total-mass bracket: alive paths are undecided, [0, e^{-lambda*acc}].
  ExpFunctional tot;
  tot.kind = ExpFunctional::Kind::total_mass;
  tot.lambda = 1.0;
  const PathRecord alive = flat_path(2.0, 10, PathStatus::alive_at_horizon);
  const ExpFunctionalValue v = exp_functional_value(alive, tot);
  CHECK(v.undecided);
  CHECK(v.low == 0.0);
  CHECK(v.high == doctest::Approx(std::exp(-2.0)));  // trapezoid of 2.0 over [0,1]

  const PathRecord dead = flat_path(2.0, 10, PathStatus::absorbed);
  const ExpFunctionalValue vd = exp_functional_value(dead, tot);
  CHECK_FALSE(vd.undecided);
  CHECK(vd.low == vd.high);

  // integral functional with f == 1 matches total accumulated mass.
  ExpFunctional integ;
  integ.kind = ExpFunctional::Kind::integral_f;
  integ.f = StepFunction::constant(1.0, 0.0, 2.0);
  const ExpFunctionalValue vi = exp_functional_value(alive, integ);
  CHECK(vi.low == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("ratio estimator") {
  std::vector<double> w{1.0, 2.0, 0.5, 1.5, 1.2, 0.8};
  // G == 1: ratio exactly 1 with zero se.
  Estimate r = ratio_conditional(w, w);
  CHECK(r.mean == doctest::Approx(1.0));
  CHECK(r.std_error == doctest::Approx(0.0));
  // G == c: ratio c.
  std::vector<double> num;
  for (double x : w) num.push_back(3.0 * x);
  r = ratio_conditional(num, w);
  CHECK(r.mean == doctest::Approx(3.0));
  CHECK(r.std_error == doctest::Approx(0.0).scale(1.0));
  // denominator indistinguishable from zero
  std::vector<double> tiny{1e-12, -1e-12, 2e-12, -2e-12};
  CHECK_THROWS_AS(ratio_conditional(tiny, tiny), std::domain_error);
}

TEST_CASE("standard error shrinks like 1/sqrt(2) when n doubles") {
  double ratio_sum = 0.0;
  const int trials = 40;
  for (int s = 1; s <= trials; ++s) {
    StreamRng rng(derive_key(500 + s, 0, 0), 0);
    std::vector<double> xs(4000), ys(8000);
    for (auto& x : xs) x = rng.uniform();
    for (auto& y : ys) y = rng.uniform();
    ratio_sum += estimate_from_samples(ys).std_error / estimate_from_samples(xs).std_error;
  }
  const double mean_ratio = ratio_sum / trials;
  CHECK(mean_ratio > 0.9 / std::sqrt(2.0));
  CHECK(mean_ratio < 1.1 / std::sqrt(2.0));
}

TEST_CASE("total-mass brackets contain the longer-horizon estimate") {
  // Streams are keyed per step, so doubling the horizon extends each path
  // without changing its first half; the bracket then contains the refined
  // estimate path by path.
  const MechanismFamily fam = MechanismFamily::quadratic(0.25);
  const BranchingMechanism mech = fam.mechanism_at(0.25);
  SimConfig base;
  base.dt = 1e-3;
  base.horizon = 6.0;
  base.x_max = 1e6;
  base.seed = 77;
  ExpFunctional tot;
  tot.kind = ExpFunctional::Kind::total_mass;
  tot.lambda = 0.7;
  const std::size_t n = 300;
  std::vector<double> low_h(n), high_h(n), low_2h(n), high_2h(n);
  std::size_t und_h = 0, und_2h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    SimConfig c = base;
    c.replicate_index = i;
    const PathRecord p =
        simulate_cbi(mech, ImmigrationMechanism(), StepFunction::zero(), 1.0, c);
    c.horizon = 12.0;
    const PathRecord p2 =
        simulate_cbi(mech, ImmigrationMechanism(), StepFunction::zero(), 1.0, c);
    for (std::size_t k = 0; k < p.values.size(); ++k)
      REQUIRE(p.values[k] == p2.values[k]);
    const auto v = exp_functional_value(p, tot);
    const auto v2 = exp_functional_value(p2, tot);
    low_h[i] = v.low;
    high_h[i] = v.high;
    low_2h[i] = v2.low;
    high_2h[i] = v2.high;
    und_h += v.undecided;
    und_2h += v2.undecided;
    CHECK(v.low <= v2.low);
    CHECK(v2.high <= v.high);
  }
  const Estimate bh = estimate_bracket(low_h, high_h, und_h);
  const Estimate b2h = estimate_bracket(low_2h, high_2h, und_2h);
  CHECK(bh.mean <= b2h.mean);
  CHECK(b2h.mean_high <= bh.mean_high);
  CHECK(und_2h < und_h);  // longer horizon decides more paths
}

TEST_CASE("closed-form suite passes and is deterministic") {
  SuiteConfig cfg;
  cfg.seed = 1;
  const VerificationReport rep = run_suite("cumulant-closed-forms", cfg);
  CHECK(rep.overall_pass);
  CHECK(rep.status == "ok");
  CHECK(rep.checks.size() >= 8);
  const VerificationReport rep2 = run_suite("cumulant-closed-forms", cfg);
  CHECK(report_json(rep) == report_json(rep2));
  CHECK(report_text(rep).find("PASS") != std::string::npos);
}

TEST_CASE("mc suite reports are byte-identical across reruns and job counts") {
  SuiteConfig cfg;
  cfg.seed = 9;
  cfg.n_override = 400;
  cfg.jobs = 1;
  const std::string a = report_json(run_suite("cbi-mc", cfg));
  cfg.jobs = 2;
  const std::string b = report_json(run_suite("cbi-mc", cfg));
  CHECK(a == b);
  const VerificationReport rep = run_suite("cbi-mc", cfg);
  REQUIRE(rep.checks.size() == 3);
  CHECK(rep.checks[0].name == "marginal-laplace-x1-t1");
  CHECK(rep.checks[1].name == "mean-identity-x1-t1");
  CHECK(rep.checks[2].name == "cbi-immigration-laplace");
}

TEST_CASE("quadratic-flow suite structure at pilot size") {
  SuiteConfig cfg;
  cfg.seed = 4;
  cfg.n_override = 200;
  cfg.jobs = 2;
  const VerificationReport rep = run_suite("quadratic-flow", cfg);
  REQUIRE(rep.checks.size() == 8);
  CHECK(rep.checks[0].name == "explosion-survival-q0.1");
  CHECK(rep.checks[1].name == "undecided-fraction-q0.1");
  CHECK(rep.checks[2].name == "explosion-survival-q0.25");
  CHECK(rep.checks[3].name == "undecided-fraction-q0.25");
  CHECK(rep.checks[4].name == "sigma-mean-theta0.25");
  CHECK(rep.checks[5].name == "totalmass-laplace-q0.5");
  CHECK(rep.checks[6].name == "superprocess-laplace-t0.5");
  CHECK(rep.checks[7].name == "flow-monotonicity-violations");
  CHECK(rep.checks[7].pass);  // exact assertion even at pilot size
  cfg.jobs = 1;
  CHECK(report_json(run_suite("quadratic-flow", cfg)) ==
        report_json([&] { cfg.jobs = 2; return run_suite("quadratic-flow", cfg); }()));
}

TEST_CASE("unknown suites are rejected") {
  CHECK_THROWS_AS(run_suite("nosuch", SuiteConfig{}), std::invalid_argument);
}

TEST_CASE("conditional ratio against a 10x brute-force resimulation") {
  // G = sigma(theta): P[sigma^2 1_fin]/P[sigma 1_fin] has no closed form, so
  // a 10x-replicate rerun serves as the oracle; the denominator is also
  // cross-checked against the sigma_mean closed form.
  const MechanismFamily fam = MechanismFamily::quadratic(0.25);
  const BranchingMechanism mech = fam.mechanism_at(0.25);
  const auto estimate = [&](std::size_t n, std::uint64_t tag) {
    std::vector<double> num(n), den(n);
    SimConfig cfg;
    cfg.dt = 5e-3;
    cfg.horizon = 40.0;
    cfg.x_max = 1e3;
    cfg.seed = 31;
    cfg.stream_tag = tag;
    parallel_for_indexed(n, 2, [&](std::size_t i) {
      SimConfig c = cfg;
      c.replicate_index = i;
      const PathRecord p =
          simulate_cbi(mech, ImmigrationMechanism(), StepFunction::zero(), 1.0, c);
      const TotalMass tm = total_mass(p);
      const double w = tm.cls == MassClass::finite ? tm.value : 0.0;
      den[i] = w;
      num[i] = w * (tm.cls == MassClass::finite ? tm.value : 0.0);
    });
    struct Out {
      Estimate ratio, den;
    };
    return Out{ratio_conditional(num, den), estimate_from_samples(den)};
  };
  const auto coarse = estimate(2000, 1);
  const auto fine = estimate(20000, 2);
  CHECK(std::abs(coarse.ratio.mean - fine.ratio.mean) <
        3.0 * (coarse.ratio.std_error + fine.ratio.std_error));
  const double oracle_den = sigma_mean(fam, 1.0, 0.25);
  CHECK(std::abs(fine.den.mean - oracle_den) < 3.0 * fine.den.std_error + 0.05);
}
