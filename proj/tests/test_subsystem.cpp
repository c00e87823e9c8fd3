#include <doctest.h>

#include <random>

#include "resil/errors.hpp"
#include "support.hpp"

using namespace resil;

TEST_CASE("shifted_h") {
  const auto t = testing::toy();
  CHECK(shifted_h(t, 0.0, std::vector{0.0}) == 1.0);

  const auto m = testing::cstr_model();
  const Subsystem& s1 = m.network[0];
  const Subsystem& s2 = m.network[1];
  CHECK(shifted_h(s1, 2100.0, std::vector{350.0, 2.0}) == 400.0);
  CHECK(shifted_h(s2, 500.0, std::vector{300.0, 1.0}) == -500.0);
}

TEST_CASE("shifted_h at d = 0 is h") {
  const auto m = testing::cstr_model();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> T(300.0, 400.0), c(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{T(rng), c(rng)};
    CHECK(shifted_h(m.network[0], 0.0, x) == m.network[0].h().eval(x));
  }
}

TEST_CASE("drift_rate") {
  const auto t = testing::toy();
  CHECK(drift_rate(t, std::vector{0.3}, std::vector{1.0}) == -1.0);
  CHECK(drift_rate(t, std::vector{0.3}, std::vector{-1.0}) == 1.0);

  const auto m = testing::cstr_model();
  const double v = drift_rate(m.network[0], std::vector{300.0, 4.0}, std::vector{-2.7e6});
  CHECK(v < 0.0);
  CHECK(v == doctest::Approx(testing::reactor_h_dot(testing::kReactor1, 300.0, 4.0, -2.7e6))
                 .epsilon(1e-12));
}

TEST_CASE("closed_loop_drift") {
  CHECK(closed_loop_drift(testing::toy("-1"), std::vector{0.2}) == 1.0);
  CHECK(closed_loop_drift(testing::toy("0"), std::vector{0.2}) == 0.0);

  const auto m = testing::cstr_model();
  const Subsystem& s1 = m.network[0];
  for (double c : {0.0, 2.0, 5.0}) {
    const double u = std::clamp(37700.0 + 100000.0 * (350.0 - 390.0), -2.7e6, 2.7e6);
    const double expect = testing::reactor_h_dot(testing::kReactor1, 390.0, c, u);
    const double got = closed_loop_drift(s1, std::vector{390.0, c});
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    CHECK(got > 0.0);
  }
}

TEST_CASE("control law saturates") {
  const auto m = testing::cstr_model();
  const Subsystem& s1 = m.network[0];
  CHECK(s1.control_at(std::vector{300.0, 1.0})[0] == 2.7e6);
  CHECK(s1.control_at(std::vector{400.0, 1.0})[0] == -2.7e6);
  CHECK(s1.control_at(std::vector{350.0, 1.0})[0] == 37700.0);
}

TEST_CASE("drift_rate is affine in the input") {
  const auto m = testing::cstr_model();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> T(300.0, 400.0), c(0.0, 5.0), u(-2.8e6, 2.8e6),
      lam(0.0, 1.0);
  for (const auto& s : m.network.subsystems()) {
    for (int i = 0; i < 500; ++i) {
      const std::vector<double> x{T(rng), c(rng)};
      const double a = u(rng), b = u(rng), l = lam(rng);
      const double mixed = drift_rate(s, x, std::vector{l * a + (1 - l) * b});
      const double split = l * drift_rate(s, x, std::vector{a}) + (1 - l) * drift_rate(s, x, std::vector{b});
      CHECK(std::abs(mixed - split) <= 1e-9 * std::max({1.0, std::abs(mixed), std::abs(split)}));
    }
  }
}

TEST_CASE("worst input is the vertex minimizing the drift") {
  const auto t = testing::toy();
  CHECK(t.worst_input(std::vector{0.0}) == Point{1.0});
  const auto m = testing::cstr_model();
  const Subsystem& s1 = m.network[0];
  CHECK(s1.worst_input(std::vector{320.0, 1.0}) == Point{-2.7e6});
  CHECK(s1.worst_input(std::vector{380.0, 1.0}) == Point{2.7e6});
  // grad h vanishes at 350: tie goes to the lower endpoint
  CHECK(s1.worst_input(std::vector{350.0, 1.0}) == Point{-2.7e6});
}

TEST_CASE("offline_worst matches the vertex minimum") {
  const auto m = testing::cstr_model();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> T(300.0, 400.0), c(0.0, 5.0);
  for (const auto& s : m.network.subsystems()) {
    for (int i = 0; i < 200; ++i) {
      const std::vector<double> x{T(rng), c(rng)};
      const double lo = drift_rate(s, x, std::vector{s.input_box()[0].lo});
      const double hi = drift_rate(s, x, std::vector{s.input_box()[0].hi});
      CHECK(s.offline_worst().eval(x) == doctest::Approx(std::min(lo, hi)).epsilon(1e-12));
    }
  }
}

TEST_CASE("derived fields") {
  const auto t = testing::toy("-x");
  CHECK(t.grad_h()[0].eval(std::vector{0.5}) == -1.0);
  CHECK(t.lie_f().is_zero());
  CHECK(t.closed_loop().eval(std::vector{0.25}) == 0.25);
  CHECK(t.dynamics(std::vector{0.0}, std::vector{0.5}) == Point{0.5});
  CHECK(t.in_state_box(std::vector{1.0}));
  CHECK_FALSE(t.in_state_box(std::vector{1.01}));
}

TEST_CASE("validation") {
  auto src = testing::toy_source();
  SUBCASE("empty state interval") {
    src.state_box = {{1.0, 1.0}};
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
  SUBCASE("empty input interval") {
    src.input_box = {{0.5, -0.5}};
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
  SUBCASE("control law outside the input box") {
    src.mu = {"-2"};
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
  SUBCASE("saturation brings it back") {
    src.mu = {"-2"};
    src.mu_saturation = {Interval{-1.0, 1.0}};
    CHECK_NOTHROW(Subsystem{src});
  }
  SUBCASE("empty safety set") {
    src.h = "-1 - x^2";
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
  SUBCASE("dimension mismatch") {
    src.f = {"0", "1"};
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
  SUBCASE("undeclared variable in h") {
    src.h = "1 - y";
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
  SUBCASE("no inputs") {
    src.inputs.clear();
    src.g = {{}};
    src.mu.clear();
    src.input_box.clear();
    CHECK_THROWS_AS(Subsystem{src}, ModelError);
  }
}
