#ifndef CBFLOW_STEP_FUNCTION_HPP
#define CBFLOW_STEP_FUNCTION_HPP

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace cbflow {

// Compactly supported piecewise-constant function on [0,inf), right
// continuous: value(t) = values[i] on [breakpoints[i], breakpoints[i+1]),
// zero outside [breakpoints.front(), breakpoints.back()).
class StepFunction {
 public:
  StepFunction() = default;

  StepFunction(std::vector<double> breakpoints, std::vector<double> values)
      : breaks_(std::move(breakpoints)), values_(std::move(values)) {
    if (breaks_.size() != values_.size() + 1)
      throw std::invalid_argument("StepFunction: need one more breakpoint than values");
    if (breaks_.front() < 0.0)
      throw std::invalid_argument("StepFunction: negative breakpoint");
    for (std::size_t i = 0; i + 1 < breaks_.size(); ++i)
      if (!(breaks_[i] < breaks_[i + 1]))
        throw std::invalid_argument("StepFunction: breakpoints not increasing");
    for (double v : values_)
      if (v < 0.0) throw std::invalid_argument("StepFunction: negative value");
  }

  static StepFunction zero() { return StepFunction(); }

  static StepFunction constant(double value, double t0, double t1) {
    return StepFunction({t0, t1}, {value});
  }

  bool is_zero() const { return support_end() == 0.0; }

  double value(double t) const {
    if (values_.empty() || t < breaks_.front() || t >= breaks_.back()) return 0.0;
    const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    return values_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
  }

  // l_f: right edge of the last piece with a positive value.
  double support_end() const {
    for (std::size_t i = values_.size(); i > 0; --i)
      if (values_[i - 1] > 0.0) return breaks_[i];
    return 0.0;
  }

  double first_support() const {
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (values_[i] > 0.0) return breaks_[i];
    return 0.0;
  }

  double total_integral() const { return tail_integral(0.0); }

  double tail_integral(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double lo = std::max(t, breaks_[i]);
      const double hi = breaks_[i + 1];
      if (hi > lo) s += values_[i] * (hi - lo);
    }
    return s;
  }

  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& piece_values() const { return values_; }

 private:
  std::vector<double> breaks_;
  std::vector<double> values_;
};

}  // namespace cbflow

#endif  // CBFLOW_STEP_FUNCTION_HPP
