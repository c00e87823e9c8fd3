#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "resil/errors.hpp"
#include "resil/resilience.hpp"
#include "support.hpp"

using namespace resil;

namespace {

OracleSettings fine() {
  OracleSettings s;
  s.grid_points_per_dim = 200;
  return s;
}

}  // namespace

TEST_CASE("index invariants") {
  CHECK_NOTHROW(ResilienceIndex{0.0, 1.0, 1.0, 0.0}.validate());
  CHECK_THROWS_AS(ResilienceIndex({-1.0, 1.0, 1.0, 0.0}).validate(), Error);
  CHECK_THROWS_AS(ResilienceIndex({1.0, 0.0, 1.0, 0.0}).validate(), Error);
  CHECK_THROWS_AS(ResilienceIndex({1.0, 1.0, 0.0, 0.0}).validate(), Error);
  CHECK_THROWS_AS(ResilienceIndex({1.0, 1.0, 1.0, -0.1}).validate(), Error);
  CHECK_THROWS_AS(ResilienceIndex({NAN, 1.0, 1.0, 0.0}).validate(), Error);
  CHECK(ResilienceIndex{0.1, 0.1, 0.1, 1}.str() == "(0.1, 0.1, 0.1, 1)");
}

TEST_CASE("verify_index on the toy") {
  const auto t = testing::toy();
  const auto ok = verify_index(t, {0.5, 0.5, 0.5, 1.0}, 1.0, fine());
  CHECK(ok.passed);
  CHECK(ok.margin_offline == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(ok.margin_recovery == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::abs(ok.margin_invariance) <= 1e-6);
  CHECK(ok.raw_offline == -1.0);
  CHECK(ok.raw_recovery == 1.0);
  CHECK(ok.raw_invariance == doctest::Approx(1.0).epsilon(1e-6));
  REQUIRE(ok.worst_offline);
  CHECK(ok.worst_offline->input == Point{1.0});

  const auto bad = verify_index(t, {0.5, 0.6, 0.5, 1.0}, 1.0, fine());
  CHECK_FALSE(bad.passed);
  CHECK(bad.margin_offline == doctest::Approx(0.5 / 0.6 - 1.0));

  const auto zero = verify_index(t, {0.0, 1.0, 1.0, 0.5}, 1.0, fine());
  CHECK(zero.margin_recovery == std::numeric_limits<double>::infinity());
  CHECK_FALSE(zero.passed);  // offline drift -1 < -0/tau
}

TEST_CASE("verify_index reports an empty buffer as a distinct failure") {
  const auto r = verify_index(testing::toy(), {2.5, 10.0, 1.0, 0.0}, 1.0, fine());
  CHECK_FALSE(r.passed);
  CHECK(r.failure == VerificationFailure::EmptyRegion);
  CHECK_FALSE(r.failure_detail.empty());
}

TEST_CASE("verify_index on a published reactor index") {
  // golden values from the first oracle run on the bundled law
  const auto m = testing::cstr_model();
  const auto r = verify_index(m.network[0], {2100, 0.0146, 0.308, 0}, m.alpha_z, fine());
  CHECK_FALSE(r.passed);
  CHECK(r.margin_offline < 0.0);
  CHECK(r.margin_recovery > 0.0);
  CHECK(r.margin_invariance > 0.0);
  CHECK(r.raw_offline == doctest::Approx(-1214775.59).epsilon(1e-8));
}

TEST_CASE("compute_index on the toy") {
  IndexSearchOptions o;
  o.eps = 0.1;
  o.tau_max = 10;
  o.phi_min = 1e-6;
  o.z = 1;
  const auto r = compute_index(testing::toy(), o, fine());
  REQUIRE(r.index);
  CHECK(r.index->d == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(r.index->tau == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(r.index->phi == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(r.index->eta == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.sup_h == 2.0);
}

TEST_CASE("compute_index without a recovering law is infeasible") {
  IndexSearchOptions o;
  o.eps = 0.1;
  const auto r = compute_index(testing::toy("0"), o, fine());
  CHECK_FALSE(r.index);
  CHECK(r.candidates_tried == 21);
  REQUIRE(r.last_recovery_drift);
  CHECK(*r.last_recovery_drift == 0.0);
  CHECK_FALSE(r.last_reason.empty());
}

TEST_CASE("compute_index degenerates to d = 0 when the input cannot hurt") {
  // h' = -u >= 0 for u in [-1, 0]
  IndexSearchOptions o;
  o.tau_max = 7.0;
  o.phi_min = 0.25;
  const auto r = compute_index(testing::toy("-1", -1.0, 0.0), o, fine());
  REQUIRE(r.index);
  CHECK(r.index->d == 0.0);
  CHECK(r.index->tau == 7.0);
  CHECK(r.index->phi == 0.25);
  CHECK(r.index->eta == 1.0);
}

TEST_CASE("compute_index on the reactors") {
  // golden values from the first oracle run
  const auto m = testing::cstr_model();
  IndexSearchOptions o;
  o.eps = 50;
  o.z = m.alpha_z;
  const auto r1 = compute_index(m.network[0], o, fine());
  REQUIRE(r1.index);
  CHECK(r1.index->d == 50.0);
  CHECK(r1.index->tau == doctest::Approx(4.11598656e-05).epsilon(1e-6));
  CHECK(r1.index->eta >= 0.0);

  o.maximize_tau = true;
  const auto best = compute_index(m.network[0], o, fine());
  REQUIRE(best.index);
  CHECK(best.index->d == 2450.0);
  CHECK(best.index->tau > r1.index->tau);
  CHECK(verify_index(m.network[0], *best.index, m.alpha_z, fine()).passed);
}

TEST_CASE("the inner solve always verifies") {
  for (const char* mu : {"-1", "-x", "-0.5 - 0.5*x", "-(x+1)^2/5 - 0.2"}) {
    for (double eps : {0.05, 0.13, 0.3}) {
      IndexSearchOptions o;
      o.eps = eps;
      o.maximize_tau = true;
      const auto t = testing::toy(mu);
      const auto r = compute_index(t, o, fine());
      if (!r.index) continue;
      const auto v = verify_index(t, *r.index, o.z, fine());
      CHECK(v.passed);
      CHECK(v.margin_offline >= -1e-9);
      CHECK(v.margin_recovery >= -1e-9);
      CHECK(v.margin_invariance >= -1e-9);
    }
  }
}

TEST_CASE("weakening a verified index keeps it verified") {
  const auto t = testing::toy("-x");
  const auto settings = fine();
  IndexSearchOptions o;
  o.eps = 0.05;
  o.maximize_tau = true;
  const auto r = compute_index(t, o, settings);
  REQUIRE(r.index);
  const ResilienceIndex base = *r.index;
  REQUIRE(verify_index(t, base, 1.0, settings).passed);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> shrink(0.01, 1.0), grow(1.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    ResilienceIndex w = base;
    w.tau *= shrink(rng);
    w.phi *= grow(rng);
    w.eta *= shrink(rng);
    CHECK(verify_index(t, w, 1.0, settings).passed);
  }
}

TEST_CASE("compute_index validates its options") {
  IndexSearchOptions o;
  o.eps = 0.0;
  CHECK_THROWS_AS(compute_index(testing::toy(), o, fine()), Error);
  o = {};
  o.z = 0.0;
  CHECK_THROWS_AS(compute_index(testing::toy(), o, fine()), Error);
  CHECK_THROWS_AS(verify_index(testing::toy(), {0.1, 0.1, 0.1, 1}, -1.0, fine()), Error);
}
