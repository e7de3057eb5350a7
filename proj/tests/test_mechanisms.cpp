#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cbflow/mechanisms.hpp"
#include "cbflow/rng.hpp"

using namespace cbflow;

TEST_CASE("phi evaluation") {
  const BranchingMechanism quad = quadratic_mechanism();
  CHECK(quad.phi(2.0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(quad.phi(0.0) == 0.0);

  const BranchingMechanism one_atom(0.0, 0.0, JumpMeasure({{1.0, 1.0}}));
  CHECK(one_atom.phi(1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(one_atom.phi(0.0) == 0.0);

  CHECK_THROWS_AS(quad.phi(-0.5), std::invalid_argument);
}

TEST_CASE("phi derivative") {
  const BranchingMechanism quad = quadratic_mechanism();
  CHECK(quad.phi_prime(3.0) == doctest::Approx(6.0).epsilon(1e-14));

  const BranchingMechanism m(1.0, 0.0, JumpMeasure({{1.0, 1.0}}));
  CHECK(m.phi_prime(0.0) == doctest::Approx(1.0));
  CHECK(m.phi_prime(1.0) == doctest::Approx(1.0 + (1.0 - std::exp(-1.0))).epsilon(1e-14));
  CHECK_THROWS_AS(m.phi_prime(-1e-9), std::invalid_argument);
}

TEST_CASE("right inverse of phi") {
  const BranchingMechanism quad = quadratic_mechanism();
  CHECK(quad.phi_inverse(4.0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(quad.phi_inverse(0.0) == doctest::Approx(0.0).epsilon(1e-12));

  const BranchingMechanism sub(1.0, 0.0);
  CHECK(sub.phi_inverse(0.0) == doctest::Approx(0.0).epsilon(1e-12));

  const BranchingMechanism super(-2.0, std::sqrt(2.0));  // phi(z) = z^2 - 2z
  CHECK(super.phi_inverse(0.0) == doctest::Approx(2.0).epsilon(1e-10));

  const BranchingMechanism bounded(0.0, 0.0);  // phi == 0
  CHECK_FALSE(bounded.phi_unbounded());
  CHECK_THROWS_AS(bounded.phi_inverse(1.0), std::invalid_argument);
  // Negative asymptotic slope: bounded above even with jumps present.
  const BranchingMechanism drooping(-1.0, 0.0, JumpMeasure({{1.0, 0.5}}));
  CHECK_FALSE(drooping.phi_unbounded());
}

TEST_CASE("criticality classification") {
  CHECK(quadratic_mechanism().criticality() == BranchingMechanism::Criticality::critical);
  CHECK(BranchingMechanism(0.1, 1.0).criticality() ==
        BranchingMechanism::Criticality::subcritical);
  CHECK(BranchingMechanism(-0.1, 1.0).criticality() ==
        BranchingMechanism::Criticality::supercritical);
}

TEST_CASE("zeta of shifted and kernel families") {
  const MechanismFamily quad = MechanismFamily::quadratic(1.0);
  CHECK(quad.zeta(0.3, 5.0) == doctest::Approx(10.0).epsilon(1e-13));
  CHECK(quad.zeta(0.9, 0.0) == 0.0);
  CHECK_THROWS_AS(quad.zeta(1.5, 1.0), std::invalid_argument);

  const MechanismFamily kern = MechanismFamily::piecewise(
      BranchingMechanism(1.0, 0.0),
      {{0.5, 1.0, JumpMeasure({{1.0, 1.0}})}, {1.0, 0.0, JumpMeasure()}});
  CHECK(kern.zeta(0.2, 1.0) ==
        doctest::Approx(1.0 + (1.0 - std::exp(-1.0))).epsilon(1e-14));
  CHECK(kern.zeta(0.7, 1.0) == 0.0);
  // Right-continuous at the breakpoint.
  CHECK(kern.zeta(0.5, 1.0) == 0.0);
}

TEST_CASE("family differences phi_pq") {
  const MechanismFamily quad = MechanismFamily::quadratic(1.0);
  CHECK(quad.phi_pq(0.0, 0.5, 2.0) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(quad.phi_pq(0.4, 0.4, 3.0) == 0.0);
  CHECK(quad.phi_pq(0.1, 0.9, 0.0) == 0.0);
  CHECK_THROWS_AS(quad.phi_pq(0.5, 0.2, 1.0), std::invalid_argument);
}

TEST_CASE("mechanism at a family index") {
  const MechanismFamily quad = MechanismFamily::quadratic(1.0);
  const BranchingMechanism at1 = quad.mechanism_at(1.0);
  CHECK(at1.b() == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(at1.sigma() == doctest::Approx(std::sqrt(2.0)));
  CHECK(at1.jumps().empty());

  const BranchingMechanism at0 = quad.mechanism_at(0.0);
  CHECK(at0.b() == 0.0);

  const MechanismFamily kern = MechanismFamily::piecewise(
      BranchingMechanism(1.0, 0.0), {{1.0, 2.0, JumpMeasure()}});
  CHECK(kern.mechanism_at(0.25).b() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("integrated kernel between indices") {
  const MechanismFamily quad = MechanismFamily::quadratic(1.0);
  const ImmigrationMechanism i1 = quad.immigration_between(0.0, 0.3);
  CHECK(i1.h() == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(i1.jumps().empty());
  CHECK(quad.immigration_between(0.2, 0.2).is_zero());

  const MechanismFamily shifted_atoms =
      MechanismFamily::shifted(BranchingMechanism(0.0, 0.0, JumpMeasure({{1.0, 1.0}})), 1.0);
  const ImmigrationMechanism i2 = shifted_atoms.immigration_between(0.0, 1.0);
  CHECK(i2.h() == 0.0);
  REQUIRE(i2.jumps().atoms().size() == 1);
  CHECK(i2.jumps().atoms()[0].size == 1.0);
  CHECK(i2.jumps().atoms()[0].weight ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
}

TEST_CASE("family construction guards") {
  CHECK_THROWS_AS(MechanismFamily::shifted(BranchingMechanism(0.5, 1.0), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(MechanismFamily::shifted(
                      BranchingMechanism(0.0, 0.0, JumpMeasure({{100.0, 1.0}})), 10.0),
                  std::invalid_argument);  // a*z overflows exp
  CHECK_THROWS_AS(MechanismFamily::piecewise(BranchingMechanism(0.0, 1.0),
                                             {{0.5, -1.0, JumpMeasure()}}),
                  std::invalid_argument);
}

// --- property tests over generated mechanisms -------------------------------

static BranchingMechanism random_mechanism(std::uint64_t seed, bool force_unbounded) {
  StreamRng r(derive_key(seed, 0, 0), 0);
  const double b = -1.0 + 3.0 * r.uniform();
  double sigma = 2.0 * r.uniform();
  const int n_atoms = static_cast<int>(r.uniform() * 3.0);
  std::vector<JumpAtom> atoms;
  for (int i = 0; i < n_atoms; ++i)
    atoms.push_back({0.1 + 2.9 * r.uniform(), 0.05 + 1.95 * r.uniform()});
  BranchingMechanism m(b, sigma, JumpMeasure(atoms));
  if (force_unbounded && !m.phi_unbounded()) return BranchingMechanism(b, 0.7, JumpMeasure(atoms));
  return m;
}

TEST_CASE("phi is convex: difference quotients are nondecreasing") {
  for (std::uint64_t s = 1; s <= 40; ++s) {
    const BranchingMechanism m = random_mechanism(s, false);
    double prev_slope = -1e300;
    double prev_x = 0.0, prev_y = m.phi(0.0);
    for (double x = 0.25; x <= 6.0; x += 0.25) {
      const double y = m.phi(x);
      const double slope = (y - prev_y) / (x - prev_x);
      CHECK(slope >= prev_slope - 1e-10);
      prev_slope = slope;
      prev_x = x;
      prev_y = y;
    }
  }
}

TEST_CASE("right-inverse property of phi_inverse") {
  for (std::uint64_t s = 1; s <= 40; ++s) {
    const BranchingMechanism m = random_mechanism(s, true);
    for (double lambda : {0.0, 0.05, 0.5, 1.7, 4.0}) {
      const double r = m.phi_inverse(lambda);
      CHECK(m.phi(r + 1e-6) > lambda);
      CHECK(m.phi(r) <= lambda + 1e-9);
    }
  }
}

static MechanismFamily random_kernel_family(std::uint64_t seed) {
  StreamRng r(derive_key(seed, 1, 0), 0);
  const double b = -0.5 + 2.0 * r.uniform();
  const double sigma = 1.5 * r.uniform();
  std::vector<KernelPiece> pieces;
  double hi = 0.0;
  const int n = 1 + static_cast<int>(r.uniform() * 3.0);
  for (int i = 0; i < n; ++i) {
    hi += 0.2 + 0.5 * r.uniform();
    std::vector<JumpAtom> atoms;
    if (r.uniform() < 0.7) atoms.push_back({0.2 + 2.0 * r.uniform(), 0.1 + r.uniform()});
    pieces.push_back({hi, 1.2 * r.uniform(), JumpMeasure(atoms)});
  }
  return MechanismFamily::piecewise(BranchingMechanism(b, sigma), pieces);
}

static MechanismFamily random_shifted_family(std::uint64_t seed) {
  StreamRng r(derive_key(seed, 2, 0), 0);
  const double b = -r.uniform();
  const double sigma = 1.5 * r.uniform();
  std::vector<JumpAtom> atoms;
  if (r.uniform() < 0.7) atoms.push_back({0.2 + 1.5 * r.uniform(), 0.1 + r.uniform()});
  return MechanismFamily::shifted(BranchingMechanism(b, sigma, JumpMeasure(atoms)), 0.8);
}

TEST_CASE("family decrease: phi_pq is nonnegative") {
  for (std::uint64_t s = 1; s <= 25; ++s) {
    const MechanismFamily f =
        (s % 2 == 0) ? random_kernel_family(s) : random_shifted_family(s);
    const double a = f.a();
    for (double p : {0.0, 0.3 * a, 0.7 * a})
      for (double q : {0.3 * a, 0.7 * a, a})
        if (p <= q)
          for (double lambda : {0.0, 0.4, 1.0, 3.0}) CHECK(f.phi_pq(p, q, lambda) >= 0.0);
  }
}

TEST_CASE("consistency: phi_p - phi_q equals the integrated kernel") {
  for (std::uint64_t s = 1; s <= 25; ++s) {
    const MechanismFamily f = random_kernel_family(s);
    const double a = f.a();
    for (double p : {0.0, 0.25 * a, 0.6 * a})
      for (double q : {0.25 * a, 0.6 * a, a}) {
        if (p > q) continue;
        const BranchingMechanism mp = f.mechanism_at(p);
        const BranchingMechanism mq = f.mechanism_at(q);
        for (double lambda : {0.0, 0.5, 1.3, 2.8})
          CHECK(std::abs(mp.phi(lambda) - mq.phi(lambda) - f.phi_pq(p, q, lambda)) < 1e-10);
      }
  }
}

TEST_CASE("shifted-form kernel identity") {
  // zeta_theta(l) = sigma^2 l + sum z e^{theta z} w (1 - e^{-z l}) must agree
  // with phi'(l - theta) - phi'(-theta).
  const BranchingMechanism base(-0.3, 1.1, JumpMeasure({{0.6, 0.8}, {1.7, 0.25}}));
  const MechanismFamily f = MechanismFamily::shifted(base, 1.2);
  for (double theta : {0.0, 0.35, 0.8, 1.2})
    for (double lambda : {0.0, 0.2, 1.0, 3.5}) {
      double kernel = base.sigma() * base.sigma() * lambda;
      for (const auto& atom : base.jumps().atoms())
        kernel += atom.size * std::exp(theta * atom.size) * atom.weight *
                  (-std::expm1(-atom.size * lambda));
      CHECK(std::abs(f.zeta(theta, lambda) - kernel) < 1e-12);
    }
}

TEST_CASE("shifted family consistency between mechanism_at and phi_q") {
  const BranchingMechanism base(-0.2, 0.9, JumpMeasure({{0.5, 0.6}}));
  const MechanismFamily f = MechanismFamily::shifted(base, 1.0);
  for (double q : {0.0, 0.3, 1.0})
    for (double lambda : {0.0, 0.7, 2.0})
      CHECK(std::abs(f.mechanism_at(q).phi(lambda) - f.phi_q(q, lambda)) < 1e-12);
  // phi_pq from the closed-form kernel equals the two-phi difference.
  for (double lambda : {0.0, 0.7, 2.0})
    CHECK(std::abs(f.phi_q(0.2, lambda) - f.phi_q(0.8, lambda) - f.phi_pq(0.2, 0.8, lambda)) < 1e-12);
}

TEST_CASE("jump measure canonical form") {
  const JumpMeasure m(std::vector<JumpAtom>{{2.0, 0.5}, {1.0, 0.25}, {2.0, 0.5}, {3.0, 0.0}});
  REQUIRE(m.atoms().size() == 2);
  CHECK(m.atoms()[0].size == 1.0);
  CHECK(m.atoms()[1].weight == 1.0);
  CHECK(m.first_moment() == doctest::Approx(0.25 + 2.0));
  CHECK_THROWS_AS(JumpMeasure(std::vector<JumpAtom>{{-1.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(JumpMeasure(std::vector<JumpAtom>{{1.0, -0.25}}), std::invalid_argument);
}
