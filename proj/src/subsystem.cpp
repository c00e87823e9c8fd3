#include "resil/subsystem.hpp"

#include <cmath>

#include "resil/errors.hpp"

namespace resil {

namespace {

void check_box(const std::vector<Interval>& box, const std::string& what,
               const std::string& owner) {
  for (std::size_t i = 0; i < box.size(); ++i) {
    const Interval& iv = box[i];
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo < iv.hi))
      throw ModelError(owner + ": " + what + " interval " + std::to_string(i) +
                       " must satisfy lo < hi");
  }
}

// Calls visit(point) on a coarse tensor grid over the box; stops early when
// visit returns false.
template <typename Visit>
void sample_box(const std::vector<Interval>& box, Visit visit) {
  const std::size_t dims = box.size();
  std::size_t per_dim = 21;
  while (per_dim > 2 && std::pow(static_cast<double>(per_dim), static_cast<double>(dims)) > 2e5)
    --per_dim;
  std::vector<std::size_t> idx(dims, 0);
  Point x(dims);
  for (;;) {
    for (std::size_t k = 0; k < dims; ++k)
      x[k] = box[k].lo + box[k].width() * static_cast<double>(idx[k]) /
                             static_cast<double>(per_dim - 1);
    if (!visit(x)) return;
    std::size_t k = dims;
    while (k > 0) {
      --k;
      if (++idx[k] < per_dim) break;
      idx[k] = 0;
      if (k == 0) return;
    }
  }
}

}  // namespace

Subsystem::Subsystem(const SubsystemSource& src)
    : name_(src.name), states_(src.states), inputs_(src.inputs),
      state_box_(src.state_box), input_box_(src.input_box) {
  const std::string& who = name_.empty() ? std::string("subsystem") : name_;
  if (states_.empty()) throw ModelError(who + ": needs at least one state");
  if (inputs_.empty()) throw ModelError(who + ": needs at least one input");
  const std::size_t nx = states_.size();
  const std::size_t nu = inputs_.size();
  if (src.f.size() != nx)
    throw ModelError(who + ": f has " + std::to_string(src.f.size()) + " entries, expected " +
                     std::to_string(nx));
  if (src.g.size() != nx) throw ModelError(who + ": g must have one row per state");
  for (const auto& row : src.g)
    if (row.size() != nu) throw ModelError(who + ": every row of g needs one entry per input");
  if (src.mu.size() != nu) throw ModelError(who + ": mu needs one entry per input");
  if (state_box_.size() != nx) throw ModelError(who + ": state_box needs one interval per state");
  if (input_box_.size() != nu) throw ModelError(who + ": input_box needs one interval per input");
  if (!src.mu_saturation.empty() && src.mu_saturation.size() != nu)
    throw ModelError(who + ": mu_saturation needs one entry per input");
  check_box(state_box_, "state_box", who);
  check_box(input_box_, "input_box", who);

  auto parse = [&](const std::string& text, const char* field) {
    try {
      return Expression::parse(text, states_);
    } catch (const Error& e) {
      throw ModelError(who + ": " + field + " '" + text + "': " + e.what());
    }
  };
  for (const auto& t : src.f) f_.push_back(parse(t, "f"));
  for (const auto& row : src.g) {
    std::vector<Expression> parsed;
    for (const auto& t : row) parsed.push_back(parse(t, "g"));
    g_.push_back(std::move(parsed));
  }
  h_ = parse(src.h, "h");
  for (const auto& t : src.mu) mu_.push_back(parse(t, "mu"));

  for (const auto& v : states_) grad_h_.push_back(h_.derivative(v));
  lie_f_ = dot(grad_h_, f_) + Expression::constant(0.0, states_);
  for (std::size_t k = 0; k < nu; ++k) {
    std::vector<Expression> column;
    for (std::size_t i = 0; i < nx; ++i) column.push_back(g_[i][k]);
    lie_g_.push_back(dot(grad_h_, column) + Expression::constant(0.0, states_));
  }
  for (std::size_t k = 0; k < nu; ++k) {
    Expression law = mu_[k];
    if (!src.mu_saturation.empty() && src.mu_saturation[k]) {
      const Interval& sat = *src.mu_saturation[k];
      if (!(sat.lo <= sat.hi)) throw ModelError(who + ": mu_saturation needs lo <= hi");
      law = clamp(law, sat.lo, sat.hi);
    }
    control_.push_back(law);
  }
  closed_loop_ = lie_f_;
  offline_worst_ = lie_f_;
  for (std::size_t k = 0; k < nu; ++k) {
    closed_loop_ = closed_loop_ + lie_g_[k] * control_[k];
    const Expression lo = lie_g_[k] * Expression::constant(input_box_[k].lo);
    const Expression hi = lie_g_[k] * Expression::constant(input_box_[k].hi);
    offline_worst_ = offline_worst_ + min(lo, hi);
  }

  // Numeric load-time checks on a coarse grid.
  bool safe_found = false;
  std::string bad_control;
  sample_box(state_box_, [&](const Point& x) {
    if (h_.eval(x) < 0.0) return true;
    safe_found = true;
    Point u = control_at(x);
    for (std::size_t k = 0; k < nu; ++k) {
      const double slack = 1e-9 * input_box_[k].width();
      if (!(u[k] >= input_box_[k].lo - slack && u[k] <= input_box_[k].hi + slack)) {
        bad_control = "mu_" + std::to_string(k + 1) + " = " + std::to_string(u[k]) +
                      " leaves the input box at a safe state; add mu_saturation or fix the law";
        return false;
      }
    }
    return true;
  });
  if (!bad_control.empty()) throw ModelError(who + ": " + bad_control);
  if (!safe_found) throw ModelError(who + ": safety set {h >= 0} misses every sampled state");
}

Point Subsystem::control_at(std::span<const double> x) const {
  Point u(control_.size());
  for (std::size_t k = 0; k < control_.size(); ++k) u[k] = control_[k].eval(x);
  return u;
}

Point Subsystem::dynamics(std::span<const double> x, std::span<const double> u) const {
  Point dx(f_.size());
  for (std::size_t i = 0; i < f_.size(); ++i) {
    double v = f_[i].eval(x);
    for (std::size_t k = 0; k < u.size(); ++k) {
      if (g_[i][k].is_zero()) continue;
      v += g_[i][k].eval(x) * u[k];
    }
    dx[i] = v;
  }
  return dx;
}

Point Subsystem::worst_input(std::span<const double> x) const {
  Point u(lie_g_.size());
  for (std::size_t k = 0; k < lie_g_.size(); ++k) {
    const double c = lie_g_[k].eval(x);
    u[k] = c * input_box_[k].lo <= c * input_box_[k].hi ? input_box_[k].lo : input_box_[k].hi;
  }
  return u;
}

bool Subsystem::in_state_box(std::span<const double> x) const {
  for (std::size_t i = 0; i < state_box_.size(); ++i)
    if (!state_box_[i].contains(x[i])) return false;
  return true;
}

double shifted_h(const Subsystem& s, double d, std::span<const double> x) {
  return s.h().eval(x) - d;
}

double drift_rate(const Subsystem& s, std::span<const double> x, std::span<const double> u) {
  if (u.size() != s.p()) throw DimensionMismatch("input vector has wrong length");
  double v = s.lie_f().eval(x);
  for (std::size_t k = 0; k < u.size(); ++k) v += s.lie_g()[k].eval(x) * u[k];
  return v;
}

double closed_loop_drift(const Subsystem& s, std::span<const double> x) {
  return drift_rate(s, x, s.control_at(x));
}

}  // namespace resil
