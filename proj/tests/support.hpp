#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "resil/interconnect.hpp"
#include "resil/model_io.hpp"
#include "resil/subsystem.hpp"

namespace testing {

// x' = u, h = 1 - x on [-1, 1]
inline resil::SubsystemSource toy_source(const std::string& mu = "-1", double ulo = -1.0,
                                         double uhi = 1.0, const std::string& name = "toy",
                                         const std::string& x = "x", const std::string& u = "u") {
  resil::SubsystemSource s;
  s.name = name;
  s.states = {x};
  s.inputs = {u};
  s.f = {"0"};
  s.g = {{"1"}};
  s.h = "1 - " + x;
  s.mu = {mu};
  s.state_box = {{-1.0, 1.0}};
  s.input_box = {{ulo, uhi}};
  return s;
}

inline resil::Subsystem toy(const std::string& mu = "-1", double ulo = -1.0, double uhi = 1.0) {
  return resil::Subsystem(toy_source(mu, ulo, uhi));
}

inline resil::Model cstr_model() { return resil::load_model(RESIL_MODELS "/cstr_series.json"); }

// Hand-coded reactor right-hand side with the tabulated constants, used as an
// oracle independent of the expression engine.
struct Reactor {
  double Fe, V, T0, c0;
};
inline constexpr Reactor kReactor1{4.998, 1.0, 300.0, 4.0};
inline constexpr Reactor kReactor2{30.0, 3.0, 300.0, 2.0};

inline double reactor_T_dot(const Reactor& r, double T, double c, double u) {
  const double k[3] = {3.0e6, 3.0e5, 3.0e5};
  const double E[3] = {5.0e4, 7.53e4, 7.53e4};
  const double H[3] = {-5.0e4, -5.2e4, -5.4e4};
  const double rho = 1000.0, p = 0.231, l = 8.314;
  double v = r.Fe / r.V * (r.T0 - T);
  for (int i = 0; i < 3; ++i) v -= H[i] / (rho * p) * k[i] * std::exp(-E[i] / (l * T)) * c;
  return v + u / (rho * p * r.V);
}

inline double reactor_h_dot(const Reactor& r, double T, double c, double u) {
  return (700.0 - 2.0 * T) * reactor_T_dot(r, T, c, u);
}

}  // namespace testing
