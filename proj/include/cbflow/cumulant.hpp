#ifndef CBFLOW_CUMULANT_HPP
#define CBFLOW_CUMULANT_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cbflow/mechanisms.hpp"
#include "cbflow/step_function.hpp"

// Numerical cumulant equations: v_t(l) from dv/dt = -phi(v), the terminal
// value problem for u(s,f), the shift map u_{p,q}, and the nonlocal cumulant
// V_t f on a q-grid. All solvers are fixed-step classical RK4; step grids
// are refined so no step straddles a breakpoint of the driving step
// function, which preserves 4th-order accuracy.

namespace cbflow {

struct SolverOptions {
  double step = 1e-4;
  double max_value = 1e12;
};

class OverflowError : public std::runtime_error {
 public:
  explicit OverflowError(const char* what) : std::runtime_error(what) {}
};

namespace detail {

inline void check_options(const SolverOptions& opts) {
  if (!(opts.step > 0.0) || !(opts.max_value > 0.0))
    throw std::invalid_argument("SolverOptions: step and max_value must be positive");
}

inline void check_overflow(double v, const SolverOptions& opts, const char* where) {
  if (!std::isfinite(v) || std::abs(v) > opts.max_value) throw OverflowError(where);
}

// Sorted unique special points expanded so each segment is subdivided into
// equal steps no longer than `step`; with `even` set, segments get an even
// step count (needed by composite Simpson).
inline std::vector<double> refine_grid(std::vector<double> special, double step,
                                       bool even) {
  std::sort(special.begin(), special.end());
  special.erase(std::unique(special.begin(), special.end()), special.end());
  if (special.size() <= 1) return special;
  std::vector<double> grid;
  grid.push_back(special.front());
  for (std::size_t i = 0; i + 1 < special.size(); ++i) {
    const double a = special[i];
    const double b = special[i + 1];
    std::size_t n = static_cast<std::size_t>(std::ceil((b - a) / step - 1e-9));
    n = std::max<std::size_t>(n, 1);
    if (even && n % 2 == 1) ++n;
    for (std::size_t k = 1; k < n; ++k)
      grid.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(n));
    grid.push_back(b);
  }
  return grid;
}

// Composite Simpson over an evenly spaced segment of 2m+1 values.
inline double simpson(const double* g, std::size_t count, double h) {
  double s = g[0] + g[count - 1];
  for (std::size_t i = 1; i + 1 < count; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * g[i];
  return s * h / 3.0;
}

}  // namespace detail

// Time-indexed curve with linear interpolation. Curves produced by the
// terminal-value solver are compactly supported: value(s) = 0 for
// s > support_end.
class CumulantCurve {
 public:
  CumulantCurve(std::vector<double> times, std::vector<double> values,
                bool zero_beyond_end)
      : times_(std::move(times)),
        values_(std::move(values)),
        zero_beyond_(zero_beyond_end) {
    if (times_.empty() || times_.size() != values_.size())
      throw std::invalid_argument("CumulantCurve: bad grid");
  }

  double value(double s) const {
    if (s < times_.front()) throw std::invalid_argument("CumulantCurve: s below grid");
    if (s >= times_.back()) {
      if (s == times_.back()) return values_.back();
      if (zero_beyond_) return 0.0;
      throw std::invalid_argument("CumulantCurve: s beyond grid");
    }
    const auto it = std::upper_bound(times_.begin(), times_.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - times_.begin());
    const double t0 = times_[i - 1], t1 = times_[i];
    const double w = (s - t0) / (t1 - t0);
    return values_[i - 1] * (1.0 - w) + values_[i] * w;
  }

  // Exact average of the piecewise-linear interpolant over [lo, hi].
  double average(double lo, double hi) const {
    if (!(hi > lo)) throw std::invalid_argument("CumulantCurve: empty interval");
    double acc = 0.0;
    double a = lo;
    auto it = std::upper_bound(times_.begin(), times_.end(), lo);
    while (a < hi) {
      double b = hi;
      if (it != times_.end() && *it < hi) b = *it;
      acc += 0.5 * (value(a) + value(b)) * (b - a);
      a = b;
      ++it;
    }
    return acc / (hi - lo);
  }

  double support_end() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  bool zero_beyond_;
};

// v_t(lambda): forward RK4 for dv/dt = -phi(v), v_0 = lambda, clamped at 0.
inline double solve_v(const BranchingMechanism& mech, double lambda, double t,
                      const SolverOptions& opts = {}) {
  detail::check_options(opts);
  if (lambda < 0.0 || t < 0.0)
    throw std::invalid_argument("solve_v: lambda and t must be nonnegative");
  if (t == 0.0) return lambda;
  const std::size_t n =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / opts.step)));
  const double h = t / static_cast<double>(n);
  double v = lambda;
  const auto rhs = [&](double x) { return -mech.phi_analytic(x); };
  for (std::size_t i = 0; i < n; ++i) {
    const double k1 = rhs(v);
    const double k2 = rhs(v + 0.5 * h * k1);
    const double k3 = rhs(v + 0.5 * h * k2);
    const double k4 = rhs(v + h * k3);
    v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (v < 0.0) v = 0.0;
    detail::check_overflow(v, opts, "solve_v: blow-up past max_value");
  }
  return v;
}

// Whole trajectory of v on [0, t]; extra_breaks are forced onto the grid and
// every segment carries an even step count so Simpson applies exactly.
inline CumulantCurve solve_v_curve(const BranchingMechanism& mech, double lambda,
                                   double t, const SolverOptions& opts = {},
                                   std::vector<double> extra_breaks = {}) {
  detail::check_options(opts);
  if (lambda < 0.0 || t < 0.0)
    throw std::invalid_argument("solve_v_curve: lambda and t must be nonnegative");
  extra_breaks.push_back(0.0);
  extra_breaks.push_back(t);
  std::vector<double> grid = detail::refine_grid(std::move(extra_breaks), opts.step, true);
  std::vector<double> vals(grid.size());
  double v = lambda;
  vals[0] = v;
  const auto rhs = [&](double x) { return -mech.phi_analytic(x); };
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double h = grid[i + 1] - grid[i];
    const double k1 = rhs(v);
    const double k2 = rhs(v + 0.5 * h * k1);
    const double k3 = rhs(v + 0.5 * h * k2);
    const double k4 = rhs(v + h * k3);
    v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (v < 0.0) v = 0.0;
    detail::check_overflow(v, opts, "solve_v_curve: blow-up past max_value");
    vals[i + 1] = v;
  }
  return CumulantCurve(std::move(grid), std::move(vals), false);
}

// u(s,f): the integral equation u(s) + int_s^inf phi(u) = int_s^inf f is
// differentiated and integrated backwards from u(l_f) = 0 as
// du/ds = phi(u(s)) - f(s); the solution is compactly supported.
inline CumulantCurve solve_u(const BranchingMechanism& mech, const StepFunction& f,
                             const SolverOptions& opts = {}) {
  detail::check_options(opts);
  const double l = f.support_end();
  if (l == 0.0) return CumulantCurve({0.0}, {0.0}, true);
  std::vector<double> special{0.0, l};
  for (double b : f.breakpoints())
    if (b > 0.0 && b < l) special.push_back(b);
  std::vector<double> grid = detail::refine_grid(std::move(special), opts.step, false);
  std::vector<double> vals(grid.size());
  double u = 0.0;
  vals.back() = 0.0;
  for (std::size_t i = grid.size() - 1; i > 0; --i) {
    const double s1 = grid[i];
    const double s0 = grid[i - 1];
    const double h = s0 - s1;  // negative
    const double fv = f.value(0.5 * (s0 + s1));  // constant on [s0, s1)
    const auto rhs = [&](double x) { return mech.phi_analytic(x) - fv; };
    const double k1 = rhs(u);
    const double k2 = rhs(u + 0.5 * h * k1);
    const double k3 = rhs(u + 0.5 * h * k2);
    const double k4 = rhs(u + h * k3);
    u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (u < 0.0) u = 0.0;
    detail::check_overflow(u, opts, "solve_u: blow-up past max_value");
    vals[i - 1] = u;
  }
  return CumulantCurve(std::move(grid), std::move(vals), true);
}

// Pointwise shift map u_{p,q}(s,f) = f(s) + phi_{p,q}(u_q(s,f)).
inline double u_shift_value(const MechanismFamily& family, double p, double q,
                            const CumulantCurve& u_q, const StepFunction& f,
                            double s) {
  return f.value(s) + family.phi_pq(p, q, u_q.value(s));
}

inline CumulantCurve u_shift(const MechanismFamily& family, double p, double q,
                             const StepFunction& f, const SolverOptions& opts = {}) {
  const CumulantCurve u_q = solve_u(family.mechanism_at(q), f, opts);
  std::vector<double> vals(u_q.times().size());
  for (std::size_t i = 0; i < vals.size(); ++i)
    vals[i] = f.value(u_q.times()[i]) + family.phi_pq(p, q, u_q.values()[i]);
  return CumulantCurve(u_q.times(), std::move(vals), true);
}

// Resample a compactly supported curve as a StepFunction with `pieces`
// equal pieces on [0, support_end]; each piece carries the exact average of
// the interpolant, so running integrals are preserved.
inline StepFunction resample_step_function(const CumulantCurve& curve,
                                           std::size_t pieces) {
  if (pieces == 0) throw std::invalid_argument("resample: need at least one piece");
  const double l = curve.support_end();
  if (l == 0.0) return StepFunction::zero();
  std::vector<double> breaks(pieces + 1);
  std::vector<double> vals(pieces);
  for (std::size_t i = 0; i <= pieces; ++i)
    breaks[i] = l * static_cast<double>(i) / static_cast<double>(pieces);
  for (std::size_t i = 0; i < pieces; ++i) {
    const double v = curve.average(breaks[i], breaks[i + 1]);
    vals[i] = v > 0.0 ? v : 0.0;
  }
  return StepFunction(std::move(breaks), std::move(vals));
}

// Exact piece averages for the shift map u_{p,q} = f + phi_{p,q}(u_q(.)):
// the step part jumps wherever f does, so averaging an interpolated combined
// curve would ramp across the jumps. Here the f part is averaged exactly
// from its piece integrals and the continuous part by trapezoid on the
// curve nodes.
inline StepFunction resample_u_shift(const MechanismFamily& family, double p, double q,
                                     const CumulantCurve& u_q, const StepFunction& f,
                                     std::size_t pieces) {
  if (pieces == 0) throw std::invalid_argument("resample_u_shift: need at least one piece");
  const double l = f.support_end();
  if (l == 0.0) return StepFunction::zero();

  const auto& fb = f.breakpoints();
  const auto& fv = f.piece_values();
  std::vector<double> pref(fb.size(), 0.0);
  for (std::size_t i = 0; i < fv.size(); ++i)
    pref[i + 1] = pref[i] + fv[i] * (fb[i + 1] - fb[i]);
  const auto f_integral_to = [&](double x) {
    if (fb.empty() || x <= fb.front()) return 0.0;
    if (x >= fb.back()) return pref.back();
    const auto it = std::upper_bound(fb.begin(), fb.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - fb.begin()) - 1;
    return pref[i] + fv[i] * (x - fb[i]);
  };

  const auto& ct = u_q.times();
  const auto g = [&](double s) { return family.phi_pq(p, q, u_q.value(s)); };

  std::vector<double> breaks(pieces + 1);
  std::vector<double> vals(pieces);
  for (std::size_t i = 0; i <= pieces; ++i)
    breaks[i] = l * static_cast<double>(i) / static_cast<double>(pieces);
  for (std::size_t i = 0; i < pieces; ++i) {
    const double lo = breaks[i], hi = breaks[i + 1];
    double acc = 0.0;
    double a = lo, ga = g(a);
    auto it = std::upper_bound(ct.begin(), ct.end(), lo);
    while (a < hi) {
      const double b = (it != ct.end() && *it < hi) ? *it : hi;
      const double gb = g(b);
      acc += 0.5 * (ga + gb) * (b - a);
      a = b;
      ga = gb;
      ++it;
    }
    const double v = (f_integral_to(hi) - f_integral_to(lo) + acc) / (hi - lo);
    vals[i] = v > 0.0 ? v : 0.0;
  }
  return StepFunction(std::move(breaks), std::move(vals));
}

// Function on the family index set, piecewise constant with the convention
// value(x) = values[j] for x in (grid[j-1], grid[j]] and values[0] at the
// left end. Pairing a grid function with a measure given by its increasing
// distribution function is then exact on the grid.
class GridFunction {
 public:
  GridFunction(std::vector<double> grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (grid_.empty() || grid_.size() != values_.size())
      throw std::invalid_argument("GridFunction: bad grid");
    for (std::size_t i = 0; i + 1 < grid_.size(); ++i)
      if (!(grid_[i] < grid_[i + 1]))
        throw std::invalid_argument("GridFunction: grid not increasing");
    for (double v : values_)
      if (v < 0.0 || !std::isfinite(v))
        throw std::invalid_argument("GridFunction: values must be nonnegative");
  }

  static GridFunction constant(std::vector<double> grid, double c) {
    std::vector<double> vals(grid.size(), c);
    return GridFunction(std::move(grid), std::move(vals));
  }

  double value(double x) const {
    if (x <= grid_.front()) return values_.front();
    if (x > grid_.back()) throw std::invalid_argument("GridFunction: x beyond grid");
    const auto it = std::lower_bound(grid_.begin(), grid_.end(), x);
    return values_[static_cast<std::size_t>(it - grid_.begin())];
  }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
};

namespace detail {

// Precomputed structure of Psi(x_j, .) on a fixed grid. Pieces at or below
// x_j see the value at x_j, so their kernels merge into one prefix
// immigration mechanism; pieces above contribute individually with the value
// of the component owning the piece.
struct PsiTable {
  std::vector<ImmigrationMechanism> prefix;           // psi_{0,x_j}
  std::vector<ImmigrationMechanism> piece;            // per split segment
  std::vector<std::size_t> owner;                     // component owning segment
  std::vector<std::size_t> first_piece_at_or_above;   // per component j
  std::vector<double> splits;

  static PsiTable build(const MechanismFamily& family, const std::vector<double>& grid) {
    PsiTable t;
    std::vector<double> splits = family.kernel_breakpoints();
    splits.insert(splits.end(), grid.begin(), grid.end());
    std::sort(splits.begin(), splits.end());
    splits.erase(std::unique(splits.begin(), splits.end()), splits.end());
    t.splits = splits;
    for (double x : grid) t.prefix.push_back(family.immigration_between(0.0, x));
    for (std::size_t i = 0; i + 1 < splits.size(); ++i) {
      t.piece.push_back(family.immigration_between(splits[i], splits[i + 1]));
      const auto it = std::lower_bound(grid.begin(), grid.end(), splits[i + 1]);
      t.owner.push_back(static_cast<std::size_t>(it - grid.begin()));
    }
    for (double x : grid) {
      std::size_t k = 0;
      while (k < t.piece.size() && splits[k] < x) ++k;
      t.first_piece_at_or_above.push_back(k);
    }
    return t;
  }

  double psi(std::size_t j, const std::vector<double>& v) const {
    double s = prefix[j].psi(v[j]);
    for (std::size_t k = first_piece_at_or_above[j]; k < piece.size(); ++k)
      s += piece[k].psi(v[owner[k]]);
    return s;
  }
};

}  // namespace detail

// Nonlocal branching operator
// Psi(x,f) = int_T f(x v theta) beta_theta dtheta
//          + int_T dtheta int (1 - e^{-z f(x v theta)}) n_theta(dz),
// computed exactly per piecewise-constant piece of the kernel and of f; the
// grid is split at x.
inline double nonlocal_psi(const MechanismFamily& family, double x,
                           const GridFunction& f) {
  if (x < 0.0 || x > family.a())
    throw std::invalid_argument("nonlocal_psi: x outside [0,a]");
  if (f.grid().back() != family.a())
    throw std::invalid_argument("nonlocal_psi: grid does not span the family index set");
  if (family.a() == 0.0) return 0.0;
  std::vector<double> splits = family.kernel_breakpoints();
  splits.insert(splits.end(), f.grid().begin(), f.grid().end());
  splits.push_back(x);
  splits.push_back(0.0);
  std::sort(splits.begin(), splits.end());
  splits.erase(std::unique(splits.begin(), splits.end()), splits.end());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < splits.size(); ++i) {
    const double l = splits[i];
    const double r = splits[i + 1];
    const double fv = (r <= x) ? f.value(x) : f.value(r);
    s += family.immigration_between(l, r).psi(fv);
  }
  return s;
}

struct VTrace {
  std::vector<double> times;
  std::vector<double> value_at_origin;  // V_s f(x_0) along the trajectory
  std::vector<double> final_values;     // V_t f on the grid
};

// dV_t f/dt (x) = -phi_0(V_t f(x)) + Psi(x, V_t f), V_0 f = f: one coupled
// RK4 system with a component per grid point. extra_time_breaks are forced
// onto the time grid with even per-segment step counts.
inline VTrace solve_V_trace(const MechanismFamily& family, const GridFunction& f,
                            double t, const SolverOptions& opts = {},
                            std::vector<double> extra_time_breaks = {}) {
  detail::check_options(opts);
  if (t < 0.0) throw std::invalid_argument("solve_V_trace: t must be nonnegative");
  if (f.grid().back() != family.a() ||
      (family.a() > 0.0 && f.grid().front() != 0.0))
    throw std::invalid_argument("solve_V_trace: grid does not span the family index set");
  const std::size_t m = f.grid().size();
  const detail::PsiTable table = detail::PsiTable::build(family, f.grid());
  const BranchingMechanism& phi0 = family.base();

  extra_time_breaks.push_back(0.0);
  extra_time_breaks.push_back(t);
  std::vector<double> times = detail::refine_grid(std::move(extra_time_breaks), opts.step, true);

  std::vector<double> y = f.values();
  std::vector<double> k1(m), k2(m), k3(m), k4(m), tmp(m);
  const auto eval = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t j = 0; j < m; ++j)
      out[j] = -phi0.phi_analytic(v[j]) + table.psi(j, v);
  };
  VTrace trace;
  trace.times = times;
  trace.value_at_origin.resize(times.size());
  trace.value_at_origin[0] = y[0];
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double h = times[i + 1] - times[i];
    eval(y, k1);
    for (std::size_t j = 0; j < m; ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
    eval(tmp, k2);
    for (std::size_t j = 0; j < m; ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
    eval(tmp, k3);
    for (std::size_t j = 0; j < m; ++j) tmp[j] = y[j] + h * k3[j];
    eval(tmp, k4);
    for (std::size_t j = 0; j < m; ++j) {
      y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      if (y[j] < 0.0) y[j] = 0.0;
      detail::check_overflow(y[j], opts, "solve_V: component blow-up past max_value");
    }
    trace.value_at_origin[i + 1] = y[0];
  }
  trace.final_values = std::move(y);
  return trace;
}

inline GridFunction solve_V(const MechanismFamily& family, const GridFunction& f,
                            double t, const SolverOptions& opts = {}) {
  VTrace trace = solve_V_trace(family, f, t, opts);
  return GridFunction(f.grid(), std::move(trace.final_values));
}

// Negative log-Laplace exponent of the inhomogeneous CBI transition
// P^rho_{r,t}(x,.) at lambda:
//   x*v_{t-r}(lambda) + int_r^t psi(v_{t-s}(lambda)) rho(s) ds.
// With tau = t-s the integral runs over [0, t-r]; rho is constant between
// its breakpoints, so each segment contributes rho_seg * Simpson(psi(v)),
// exact across the jumps and 4th order within segments.
inline double cbi_log_laplace(const BranchingMechanism& mech,
                              const ImmigrationMechanism& imm, const StepFunction& rho,
                              double x, double r, double t, double lambda,
                              const SolverOptions& opts = {}) {
  detail::check_options(opts);
  if (r > t || r < 0.0) throw std::invalid_argument("cbi_log_laplace: need 0 <= r <= t");
  if (lambda < 0.0 || x < 0.0)
    throw std::invalid_argument("cbi_log_laplace: x and lambda must be nonnegative");
  const double span = t - r;
  if (span == 0.0) return x * lambda;
  if (lambda == 0.0) return 0.0;  // v == 0 and psi(0) = 0

  std::vector<double> segment_ends{0.0, span};
  for (double b : rho.breakpoints())
    if (b > r && b < t) segment_ends.push_back(t - b);
  std::sort(segment_ends.begin(), segment_ends.end());
  segment_ends.erase(std::unique(segment_ends.begin(), segment_ends.end()),
                     segment_ends.end());

  const bool want_integral = !imm.is_zero() && !rho.is_zero();
  double v = lambda;
  double integral = 0.0;
  const auto rhs = [&](double y) { return -mech.phi_analytic(y); };
  std::vector<double> g;
  for (std::size_t seg = 0; seg + 1 < segment_ends.size(); ++seg) {
    const double a = segment_ends[seg];
    const double b = segment_ends[seg + 1];
    std::size_t n = static_cast<std::size_t>(std::ceil((b - a) / opts.step - 1e-9));
    n = std::max<std::size_t>(n, 2);
    if (n % 2 == 1) ++n;
    const double h = (b - a) / static_cast<double>(n);
    const double rho_val = rho.value(t - 0.5 * (a + b));  // constant on the segment
    g.assign(n + 1, 0.0);
    g[0] = want_integral ? imm.psi(v) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double k1 = rhs(v);
      const double k2 = rhs(v + 0.5 * h * k1);
      const double k3 = rhs(v + 0.5 * h * k2);
      const double k4 = rhs(v + h * k3);
      v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (v < 0.0) v = 0.0;
      detail::check_overflow(v, opts, "cbi_log_laplace: v blow-up past max_value");
      g[i + 1] = want_integral ? imm.psi(v) : 0.0;
    }
    if (want_integral && rho_val != 0.0)
      integral += rho_val * detail::simpson(g.data(), n + 1, h);
  }
  return x * v + integral;
}

}  // namespace cbflow

#endif  // CBFLOW_CUMULANT_HPP
