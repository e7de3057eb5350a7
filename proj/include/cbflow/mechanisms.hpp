#ifndef CBFLOW_MECHANISMS_HPP
#define CBFLOW_MECHANISMS_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

// Branching mechanisms phi(l) = b*l + (1/2)*sigma^2*l^2 +
// sum_i w_i*(exp(-z_i*l) - 1 + z_i*l), their immigration counterparts
// psi(l) = h*l + sum_i w_i*(1 - exp(-z_i*l)), and admissible families
// {phi_q : q in [0,a]} with kernel zeta_q. Jump measures are finite atom
// lists; infinite-activity measures must be pre-truncated by the caller,
// with the compensator absorbed into b.

namespace cbflow {

struct JumpAtom {
  double size = 0.0;    // z > 0
  double weight = 0.0;  // rate density w > 0
};

class JumpMeasure {
 public:
  JumpMeasure() = default;

  explicit JumpMeasure(std::vector<JumpAtom> atoms) : atoms_(std::move(atoms)) {
    for (const auto& a : atoms_) {
      if (!(a.size > 0.0) || !std::isfinite(a.size))
        throw std::invalid_argument("JumpMeasure: atom size must be positive");
      if (a.weight < 0.0 || !std::isfinite(a.weight))
        throw std::invalid_argument("JumpMeasure: atom weight must be positive");
    }
    // Canonical form: sorted by size, equal sizes merged, zero weights dropped.
    std::sort(atoms_.begin(), atoms_.end(),
              [](const JumpAtom& x, const JumpAtom& y) { return x.size < y.size; });
    std::vector<JumpAtom> merged;
    for (const auto& a : atoms_) {
      if (a.weight == 0.0) continue;
      if (!merged.empty() && merged.back().size == a.size)
        merged.back().weight += a.weight;
      else
        merged.push_back(a);
    }
    atoms_ = std::move(merged);
  }

  const std::vector<JumpAtom>& atoms() const { return atoms_; }
  bool empty() const { return atoms_.empty(); }

  double total_weight() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.weight;
    return s;
  }

  double first_moment() const {  // sum z*w
    double s = 0.0;
    for (const auto& a : atoms_) s += a.size * a.weight;
    return s;
  }

 private:
  std::vector<JumpAtom> atoms_;
};

class BranchingMechanism {
 public:
  BranchingMechanism(double b, double sigma, JumpMeasure m = JumpMeasure())
      : b_(b), sigma_(sigma), m_(std::move(m)) {
    if (sigma_ < 0.0 || !std::isfinite(sigma_) || !std::isfinite(b_))
      throw std::invalid_argument("BranchingMechanism: bad parameters");
  }

  double b() const { return b_; }
  double sigma() const { return sigma_; }
  const JumpMeasure& jumps() const { return m_; }

  // Same formula on the whole real line; negative arguments are the analytic
  // continuation needed by shifted families.
  double phi_analytic(double x) const {
    double s = b_ * x + 0.5 * sigma_ * sigma_ * x * x;
    for (const auto& a : m_.atoms()) s += a.weight * (std::expm1(-a.size * x) + a.size * x);
    return s;
  }

  double phi_prime_analytic(double x) const {
    double s = b_ + sigma_ * sigma_ * x;
    for (const auto& a : m_.atoms()) s -= a.size * a.weight * std::expm1(-a.size * x);
    return s;
  }

  double phi(double lambda) const {
    require_nonneg(lambda);
    return phi_analytic(lambda);
  }

  double phi_prime(double lambda) const {
    require_nonneg(lambda);
    return phi_prime_analytic(lambda);
  }

  // phi(z) -> inf as z -> inf. With finite atoms this means sigma > 0 or the
  // asymptotic slope b + sum z*w is positive.
  bool phi_unbounded() const {
    return sigma_ > 0.0 || b_ + m_.first_moment() > 0.0;
  }

  // Right inverse phi^{-1}(l) = inf{z >= 0 : phi(z) > l}. Bracketing by
  // doubling, then bisection (80 steps, absolute tolerance 1e-12); robust for
  // convex phi with a possible flat or negative dip.
  double phi_inverse(double lambda) const {
    require_nonneg(lambda);
    if (!phi_unbounded())
      throw std::invalid_argument("phi_inverse: phi is bounded above");
    double hi = 1.0;
    while (!(phi_analytic(hi) > lambda)) {
      hi *= 2.0;
      if (hi > 1e154) throw std::runtime_error("phi_inverse: bracketing failed");
    }
    double lo = 0.0;
    if (phi_analytic(lo) > lambda) return 0.0;  // cannot happen for lambda >= 0
    for (int i = 0; i < 80 && hi - lo > 1e-12; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (phi_analytic(mid) > lambda)
        hi = mid;
      else
        lo = mid;
    }
    return 0.5 * (lo + hi);
  }

  enum class Criticality { critical, subcritical, supercritical };
  Criticality criticality() const {
    if (b_ == 0.0) return Criticality::critical;
    return b_ > 0.0 ? Criticality::subcritical : Criticality::supercritical;
  }

 private:
  static void require_nonneg(double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda))
      throw std::invalid_argument("mechanism: lambda must be nonnegative");
  }

  double b_;
  double sigma_;
  JumpMeasure m_;
};

inline BranchingMechanism quadratic_mechanism() {
  // phi(l) = l^2: b = 0, sigma = sqrt(2), no jumps.
  return BranchingMechanism(0.0, std::sqrt(2.0));
}

class ImmigrationMechanism {
 public:
  ImmigrationMechanism() = default;

  ImmigrationMechanism(double h, JumpMeasure n = JumpMeasure())
      : h_(h), n_(std::move(n)) {
    if (h_ < 0.0 || !std::isfinite(h_))
      throw std::invalid_argument("ImmigrationMechanism: h must be nonnegative");
  }

  double h() const { return h_; }
  const JumpMeasure& jumps() const { return n_; }
  bool is_zero() const { return h_ == 0.0 && n_.empty(); }

  double psi(double lambda) const {
    if (lambda < 0.0) throw std::invalid_argument("psi: lambda must be nonnegative");
    double s = h_ * lambda;
    for (const auto& a : n_.atoms()) s -= a.weight * std::expm1(-a.size * lambda);
    return s;
  }

  double psi_prime0() const { return h_ + n_.first_moment(); }

 private:
  double h_ = 0.0;
  JumpMeasure n_;
};

// One piece of a piecewise-constant kernel: (beta, n) hold on
// [previous theta_hi, theta_hi).
struct KernelPiece {
  double theta_hi = 0.0;
  double beta = 0.0;
  JumpMeasure n;
};

// Admissible family {phi_q : q in [0,a]} in one of two forms:
//  - piecewise: explicit kernel zeta_theta(l) = beta_theta*l +
//    sum w*(1-exp(-z*l)), piecewise constant in theta; theta-integrals are
//    computed exactly per piece, never by quadrature.
//  - shifted: phi_q(l) = phi(l-q) - phi(-q) for a base phi with b <= 0; the
//    kernel is beta_theta = sigma^2, n_theta(dz) = z*exp(theta*z)*m(dz), and
//    all derived quantities have closed forms.
class MechanismFamily {
 public:
  static MechanismFamily shifted(BranchingMechanism base, double a) {
    if (base.b() > 0.0)
      throw std::invalid_argument("shifted family: base must have b <= 0");
    if (a < 0.0 || !std::isfinite(a))
      throw std::invalid_argument("shifted family: bad right endpoint");
    // Domain condition sum z*exp(a*z)*w < inf; finite automatically, but the
    // check bounds exponent overflow.
    for (const auto& atom : base.jumps().atoms())
      if (a * atom.size > 700.0)
        throw std::invalid_argument("shifted family: a*z too large, exp overflows");
    MechanismFamily f(std::move(base), a);
    f.shifted_ = true;
    return f;
  }

  static MechanismFamily piecewise(BranchingMechanism base,
                                   std::vector<KernelPiece> pieces) {
    double prev = 0.0;
    for (const auto& p : pieces) {
      if (!(p.theta_hi > prev))
        throw std::invalid_argument("kernel family: breakpoints not increasing");
      if (p.beta < 0.0)
        throw std::invalid_argument("kernel family: beta must be nonnegative");
      prev = p.theta_hi;
    }
    MechanismFamily f(std::move(base), prev);
    f.pieces_ = std::move(pieces);
    return f;
  }

  static MechanismFamily quadratic(double a) {
    return shifted(quadratic_mechanism(), a);
  }

  double a() const { return a_; }
  bool is_shifted() const { return shifted_; }
  const BranchingMechanism& base() const { return base_; }

  // Split points of the kernel in [0,a], endpoints included.
  std::vector<double> kernel_breakpoints() const {
    std::vector<double> bp{0.0};
    for (const auto& p : pieces_) bp.push_back(p.theta_hi);
    if (bp.back() != a_) bp.push_back(a_);
    return bp;
  }

  // zeta_q(l) = -(d/dq) phi_q(l) = beta_q*l + int (1-e^{-z*l}) n_q(dz).
  double zeta(double theta, double lambda) const {
    require_index(theta);
    require_nonneg(lambda);
    if (shifted_)
      return base_.phi_prime_analytic(lambda - theta) - base_.phi_prime_analytic(-theta);
    if (pieces_.empty()) return 0.0;
    const KernelPiece& p = piece_at(theta);
    double s = p.beta * lambda;
    for (const auto& atom : p.n.atoms())
      s -= atom.weight * std::expm1(-atom.size * lambda);
    return s;
  }

  // Integrated kernel over (p,q]: h = int beta, n = int n_theta dtheta.
  // For the shifted form both integrals have closed forms.
  ImmigrationMechanism immigration_between(double p, double q) const {
    require_pair(p, q);
    if (shifted_) {
      const double s2 = base_.sigma() * base_.sigma();
      std::vector<JumpAtom> atoms;
      atoms.reserve(base_.jumps().atoms().size());
      for (const auto& atom : base_.jumps().atoms()) {
        const double w =
            atom.weight * (std::exp(q * atom.size) - std::exp(p * atom.size));
        atoms.push_back({atom.size, w});
      }
      return ImmigrationMechanism(s2 * (q - p), JumpMeasure(std::move(atoms)));
    }
    double h = 0.0;
    std::vector<JumpAtom> atoms;
    double lo = 0.0;
    for (const auto& piece : pieces_) {
      const double l = std::max(p, lo);
      const double r = std::min(q, piece.theta_hi);
      if (r > l) {
        const double len = r - l;
        h += piece.beta * len;
        for (const auto& atom : piece.n.atoms())
          atoms.push_back({atom.size, atom.weight * len});
      }
      lo = piece.theta_hi;
    }
    return ImmigrationMechanism(h, JumpMeasure(std::move(atoms)));
  }

  // phi_{p,q}(l) = phi_p(l) - phi_q(l) = int_p^q zeta_theta(l) dtheta. The
  // integrated kernel is exactly psi of immigration_between, so one code
  // path serves both family forms.
  double phi_pq(double p, double q, double lambda) const {
    require_nonneg(lambda);
    return immigration_between(p, q).psi(lambda);
  }

  // phi_q(l); the shifted form evaluates phi(l-q) - phi(-q) directly.
  double phi_q(double q, double lambda) const {
    require_index(q);
    require_nonneg(lambda);
    if (shifted_)
      return base_.phi_analytic(lambda - q) - base_.phi_analytic(-q);
    return mechanism_at(q).phi(lambda);
  }

  // Right inverse of phi_q. For the shifted form this uses the identity
  // phi_q^{-1}(l) = q + phi^{-1}(l + phi(-q)), so a single root-find on the
  // base phi keeps all q exactly consistent.
  double phi_q_inverse(double q, double lambda) const {
    require_index(q);
    require_nonneg(lambda);
    if (shifted_)
      return q + base_.phi_inverse(lambda + base_.phi_analytic(-q));
    return mechanism_at(q).phi_inverse(lambda);
  }

  // (b_q, sigma, m_q): b_q = b_p - int beta - int int z n, m_q = m_p + int n.
  BranchingMechanism mechanism_at(double q) const {
    require_index(q);
    if (shifted_) {
      std::vector<JumpAtom> atoms;
      atoms.reserve(base_.jumps().atoms().size());
      for (const auto& atom : base_.jumps().atoms())
        atoms.push_back({atom.size, atom.weight * std::exp(q * atom.size)});
      return BranchingMechanism(base_.phi_prime_analytic(-q), base_.sigma(),
                                JumpMeasure(std::move(atoms)));
    }
    const ImmigrationMechanism acc = immigration_between(0.0, q);
    std::vector<JumpAtom> atoms = base_.jumps().atoms();
    for (const auto& atom : acc.jumps().atoms()) atoms.push_back(atom);
    const double b_q = base_.b() - acc.h() - acc.jumps().first_moment();
    return BranchingMechanism(b_q, base_.sigma(), JumpMeasure(std::move(atoms)));
  }

 private:
  MechanismFamily(BranchingMechanism base, double a) : base_(std::move(base)), a_(a) {}

  const KernelPiece& piece_at(double theta) const {
    // Right-continuous in theta; theta == a falls in the last piece.
    for (const auto& p : pieces_)
      if (theta < p.theta_hi) return p;
    return pieces_.back();
  }

  void require_index(double q) const {
    if (q < 0.0 || q > a_ || !std::isfinite(q))
      throw std::invalid_argument("family: index outside [0,a]");
  }

  void require_pair(double p, double q) const {
    require_index(p);
    require_index(q);
    if (p > q) throw std::invalid_argument("family: need p <= q");
  }

  static void require_nonneg(double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda))
      throw std::invalid_argument("family: lambda must be nonnegative");
  }

  BranchingMechanism base_;
  double a_;
  bool shifted_ = false;
  std::vector<KernelPiece> pieces_;
};

}  // namespace cbflow

#endif  // CBFLOW_MECHANISMS_HPP
