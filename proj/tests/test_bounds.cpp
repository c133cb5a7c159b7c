#include <doctest.h>

#include <cmath>

#include "cdpm/bounds.hpp"
#include "cdpm/errors.hpp"

using namespace cdpm;

TEST_SUITE("bounds") {
  TEST_CASE("u vanishes at t = 0") {
    for (Family f : kAllFamilies) CHECK(u_of_t(BoundInputs::from_spec(DiffusionSpec::defaults(f)), 0.0) == 0.0);
  }

  TEST_CASE("constant coefficients") {
    BoundInputs in;
    in.r_b = [](double) { return 0.2; };
    in.sigma_sq = [](double) { return 0.25; };
    in.T = 10.0;
    in.h = 0.0;
    CHECK(u_of_t(in, 3.0) == doctest::Approx(-0.4 * 3.0).epsilon(1e-10));

    const auto cou = BoundInputs::from_spec(DiffusionSpec::defaults(Family::COU));
    CHECK(u_of_t(cou, 3.0) == doctest::Approx(-0.4 * 3.0 + 0.2 * 0.25 * 3.0).epsilon(1e-12));
  }

  TEST_CASE("closed form and quadrature agree") {
    auto in = BoundInputs::from_spec(DiffusionSpec::defaults(Family::VP));
    in.L = 1.0;
    in.h = 0.1;
    for (double t : {0.5, 4.0, 10.0}) CHECK(std::abs(u_of_t(in, t) - u_of_t_quadrature(in, t)) <= 1e-10);
    for (Family f : {Family::CSubVP, Family::VE, Family::CVP}) {
      const auto b = BoundInputs::from_spec(DiffusionSpec::defaults(f));
      CHECK(u_of_t(b, 7.0) == doctest::Approx(u_of_t_quadrature(b, 7.0)).epsilon(1e-10));
    }
  }

  TEST_CASE("sampling bound") {
    auto in = BoundInputs::from_spec(DiffusionSpec::defaults(Family::COU));
    in.epsilon = 0.0;
    in.eta = 0.0;
    CHECK(sampling_error_bound(in).value == 0.0);

    in.eta = 0.8;
    in.L = 0.1;
    in.h = 0.05;
    const double u = -2.0 * (0.2 - (0.1 + 0.05) * 0.25) * 10.0;
    const auto v = sampling_error_bound(in);
    CHECK(v.u_T == doctest::Approx(u));
    CHECK(v.value == doctest::Approx(0.8 * std::exp(u / 2.0)).epsilon(1e-10));

    double prev = -1.0;
    for (double e : {0.0, 0.05, 0.1, 0.5, 1.0}) {
      in.epsilon = e;
      const double b = sampling_error_bound_best_h(in).value;
      CHECK(b >= prev);
      prev = b;
    }
  }

  TEST_CASE("overflow is reported, not thrown") {
    auto in = BoundInputs::from_spec(DiffusionSpec::defaults(Family::VE));
    in.L = 1e4;
    in.eta = 1.0;
    const auto v = sampling_error_bound(in);
    CHECK(v.overflow);
    CHECK(std::isinf(v.value));
    CHECK_FALSE(v.diagnostics.empty());
  }

  TEST_CASE("CVP bound") {
    auto in = BoundInputs::from_spec(DiffusionSpec::defaults(Family::CVP));
    in.kappa = 1.0;
    in.h = 0.05;
    in.epsilon = 0.0;
    in.second_moment = 0.0;
    CHECK(cvp_bound(in).value == 0.0);

    CHECK(cvp_h_cap(in) == doctest::Approx(1.0 / (2.0 * 0.2 * 10.0)));
    double prev = -1.0;
    in.second_moment = 1.0;
    for (double e : {0.0, 0.1, 0.2, 0.5}) {
      in.epsilon = e;
      const double b = cvp_bound(in).value;
      CHECK(b >= prev);
      prev = b;
    }
    in.h = 0.3;
    CHECK_THROWS_AS(cvp_bound(in), DomainError);
    in.h = 0.0;
    CHECK_THROWS_AS(cvp_bound(in), DomainError);
  }

  TEST_CASE("discretisation order on exact power laws") {
    std::vector<std::pair<double, double>> half, one;
    for (double d : {0.05, 0.025, 0.0125, 0.00625}) {
      half.emplace_back(d, 3.0 * std::sqrt(d));
      one.emplace_back(d, 2.0 * d);
    }
    CHECK(std::abs(discretization_order(half).slope - 0.5) <= 1e-12);
    CHECK(discretization_order(one).slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(discretization_order(one).monotone);

    auto bumpy = one;
    bumpy[2].second = 1.0;
    const auto fit = discretization_order(bumpy);
    CHECK_FALSE(fit.monotone);
    CHECK_FALSE(fit.warning.empty());
    CHECK_THROWS(discretization_order({{0.1, 1.0}, {0.05, 0.5}}));
  }
}
