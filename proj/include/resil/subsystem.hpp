#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resil/expr.hpp"

namespace resil {

using Point = std::vector<double>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Textual description of a subsystem, as it appears in a model file.
struct SubsystemSource {
  std::string name;
  std::vector<std::string> states;
  std::vector<std::string> inputs;
  std::vector<std::string> f;
  std::vector<std::vector<std::string>> g;  // n rows of p entries
  std::string h;
  std::vector<std::string> mu;
  std::vector<std::optional<Interval>> mu_saturation;  // empty or one per input
  std::vector<Interval> state_box;
  std::vector<Interval> input_box;
};

/// Control-affine subsystem  x' = f(x) + g(x) u  with safety function h,
/// safe control law mu and compact state/input boxes.
///
/// Besides the user data it carries the derived scalar fields the oracle
/// works with, all expressed over the state variables:
///   lie_f      = grad h . f
///   lie_g[k]   = grad h . g[:,k]
///   control[k] = mu_k, clipped to its saturation bounds when given
///   closed_loop = lie_f + sum_k lie_g[k] * control[k]
///   offline_worst = lie_f + sum_k min(lie_g[k] * u_k,min, lie_g[k] * u_k,max)
class Subsystem {
 public:
  explicit Subsystem(const SubsystemSource& src);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& state_vars() const { return states_; }
  const std::vector<std::string>& input_vars() const { return inputs_; }
  std::size_t n() const { return states_.size(); }
  std::size_t p() const { return inputs_.size(); }

  const std::vector<Expression>& f() const { return f_; }
  const std::vector<std::vector<Expression>>& g() const { return g_; }
  const Expression& h() const { return h_; }
  const std::vector<Expression>& mu() const { return mu_; }
  const std::vector<Interval>& state_box() const { return state_box_; }
  const std::vector<Interval>& input_box() const { return input_box_; }

  const std::vector<Expression>& grad_h() const { return grad_h_; }
  const Expression& lie_f() const { return lie_f_; }
  const std::vector<Expression>& lie_g() const { return lie_g_; }
  const std::vector<Expression>& control() const { return control_; }
  const Expression& closed_loop() const { return closed_loop_; }
  const Expression& offline_worst() const { return offline_worst_; }

  /// Saturated safe control mu(x).
  Point control_at(std::span<const double> x) const;
  /// Dynamics f(x) + g(x) u.
  Point dynamics(std::span<const double> x, std::span<const double> u) const;
  /// The input-box vertex minimizing grad h . g(x) u (ties pick u_min).
  Point worst_input(std::span<const double> x) const;
  bool in_state_box(std::span<const double> x) const;

 private:
  std::string name_;
  std::vector<std::string> states_;
  std::vector<std::string> inputs_;
  std::vector<Expression> f_;
  std::vector<std::vector<Expression>> g_;
  Expression h_;
  std::vector<Expression> mu_;
  std::vector<Interval> state_box_;
  std::vector<Interval> input_box_;

  std::vector<Expression> grad_h_;
  Expression lie_f_;
  std::vector<Expression> lie_g_;
  std::vector<Expression> control_;
  Expression closed_loop_;
  Expression offline_worst_;
};

enum class RegionTag {
  SafeSet,               // h >= 0
  SafeMinusBuffer,       // 0 <= h < d
  Buffer,                // h >= d
  StateBox,              // whole state box
  SafeSetTimesInputBox,  // h >= 0, inputs ranging over their box
};

struct Region {
  RegionTag tag = RegionTag::SafeSet;
  double d = 0.0;

  static Region safe_set() { return {RegionTag::SafeSet, 0.0}; }
  static Region band(double d) { return {RegionTag::SafeMinusBuffer, d}; }
  static Region buffer(double d) { return {RegionTag::Buffer, d}; }
  static Region state_box() { return {RegionTag::StateBox, 0.0}; }
  static Region safe_set_times_inputs() { return {RegionTag::SafeSetTimesInputBox, 0.0}; }
};

/// h(x) - d.
double shifted_h(const Subsystem& s, double d, std::span<const double> x);
/// grad h(x) . (f(x) + g(x) u).
double drift_rate(const Subsystem& s, std::span<const double> x, std::span<const double> u);
/// drift_rate under the saturated safe control law.
double closed_loop_drift(const Subsystem& s, std::span<const double> x);

}  // namespace resil
