#include <doctest.h>

#include <cmath>

#include "cdpm/errors.hpp"
#include "cdpm/transforms.hpp"

using namespace cdpm;

namespace {

TransformMap default_map(double T = 4.0) {
  auto c = DiffusionSpec::defaults(Family::CSubVP);
  c.T = T;
  return TransformMap(DiffusionSpec::defaults(Family::VE), c);
}

}  // namespace

TEST_SUITE("transforms") {
  TEST_CASE("clock at the origin") {
    const auto map = default_map();
    CHECK(map.tau(0.0) == 0.0);
    CHECK(map.f(0.0) == 1.0);
    CHECK(map.g(0.0) == 0.0);
  }

  TEST_CASE("tau solves the variance identity and increases") {
    const auto map = default_map();
    double prev = -1.0;
    for (int i = 1; i <= 1000; ++i) {
      const double t = map.c_spec.T * i / 1000.0;
      CHECK(std::abs(map.identity_residual(t)) <= 1e-10);
      const double tau = map.tau(t);
      CHECK(tau > prev);
      prev = tau;
    }
  }

  TEST_CASE("precondition") {
    auto c = DiffusionSpec::defaults(Family::CSubVP);
    c.beta_min = 0.01;
    c.beta_max = 8.0;
    c.T = 1.0;
    const TransformMap swiss(DiffusionSpec::defaults(Family::VE), c);
    const auto rep = check_precondition(swiss);
    const double f1 = std::exp((8.0 - 0.01) / 4.0 + 0.01 / 2.0);
    CHECK(rep.g_T_sq == doctest::Approx((f1 - 1.0 / f1) * (f1 - 1.0 / f1)));
    CHECK(rep.ve_gap == doctest::Approx(0.2475));
    CHECK_FALSE(rep.ok);
    CHECK_THROWS_AS(swiss.tau(1.0), ConfigError);

    c.T = 0.99 * rep.max_T;
    CHECK(check_precondition(TransformMap(DiffusionSpec::defaults(Family::VE), c)).ok);
    c.T = 1.01 * rep.max_T;
    CHECK_FALSE(check_precondition(TransformMap(DiffusionSpec::defaults(Family::VE), c)).ok);

    CHECK(check_precondition(default_map(4.0)).ok);
    CHECK_FALSE(check_precondition(default_map(10.0)).ok);
  }

  TEST_CASE("wrong families are rejected") {
    CHECK_THROWS_AS(TransformMap(DiffusionSpec::defaults(Family::VP), DiffusionSpec::defaults(Family::CSubVP)),
                    ConfigError);
    CHECK_THROWS_AS(TransformMap(DiffusionSpec::defaults(Family::VE), DiffusionSpec::defaults(Family::CVP)),
                    ConfigError);
  }

  TEST_CASE("transported score and density match the direct closed form") {
    const auto map = default_map();
    const auto target = MixtureTarget::gaussian({0.3}, 0.5);
    const auto ve_field = exact_score_field(map.ve_spec, target);
    const auto moved = transport_score(map, ve_field);
    const auto direct = exact_score_field(map.c_spec, target);
    REQUIRE(moved.has_log_density());
    double worst_s = 0.0, worst_p = 0.0;
    for (int i = 1; i <= 50; ++i) {
      const double t = map.c_spec.T * i / 50.0;
      for (int j = 0; j <= 20; ++j) {
        const std::vector<double> x{-3.0 + 0.3 * j};
        worst_s = std::max(worst_s, std::abs(moved(t, x)[0] - direct(t, x)[0]));
        worst_p = std::max(worst_p, std::abs(moved.log_density(t, x) - direct.log_density(t, x)));
      }
    }
    CHECK(worst_s <= 1e-9);
    CHECK(worst_p <= 1e-9);

    const std::vector<double> x{0.4};
    CHECK(moved(0.0, x)[0] == doctest::Approx(ve_field(0.0, x)[0]));

    // Without the 1/f factor the result is off once f > 1.
    const auto literal = transport_score(map, ve_field, TransportRule::Literal);
    CHECK(std::abs(literal(3.0, x)[0] - direct(3.0, x)[0]) > 1e-3);
  }
}
