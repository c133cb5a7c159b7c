#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "cdpm/errors.hpp"
#include "cdpm/score_oracle.hpp"

using namespace cdpm;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

ScoreField offset_field(const ScoreField& base, double c) {
  return ScoreField(base.dim(), [base, c](double t, std::span<const double> x, std::span<double> out, const EvalKey& k) {
    base.eval(t, x, out, k);
    for (double& v : out) v += c;
  });
}

}  // namespace

TEST_SUITE("score_oracle") {
  TEST_CASE("log-density at the kernel mean") {
    auto spec = DiffusionSpec::defaults(Family::COU);
    spec.sigma = std::sqrt(2.0 * spec.theta / 3.0);  // s = 1 where f = 2
    const double t = std::log(2.0) / spec.theta;
    const auto k = kernel(spec, t);
    REQUIRE(k.mean_factor == doctest::Approx(2.0));
    REQUIRE(k.cond_std == doctest::Approx(1.0));
    const std::vector<double> x{-2.0};
    CHECK(marginal_logdensity(spec, MixtureTarget::point_mass({-1.0}), t, x) == doctest::Approx(-kHalfLog2Pi));

    const std::vector<double> zero{0.0, 0.0};
    CHECK(marginal_logdensity(DiffusionSpec::defaults(Family::VP, 2), MixtureTarget::gaussian({0.0, 0.0}, 1.0), 0.0,
                              zero) == doctest::Approx(-2.0 * kHalfLog2Pi));
    CHECK_THROWS_AS(marginal_logdensity(spec, MixtureTarget::point_mass({-1.0}), 0.0, x), DomainError);
  }

  TEST_CASE("Gaussian score formula") {
    const auto spec = DiffusionSpec::defaults(Family::CVP);
    const double m = 0.7, v = 0.3, t = 4.0, x = 1.9;
    const auto k = kernel(spec, t);
    const double expected = (k.mean_factor * m - x) / (k.mean_factor * k.mean_factor * v + k.cond_var());
    const std::vector<double> xv{x};
    CHECK(exact_score(spec, MixtureTarget::gaussian({m}, v), t, xv)[0] == doctest::Approx(expected).epsilon(1e-13));
  }

  TEST_CASE("symmetric mixture has zero score at the midpoint") {
    MixtureTarget mix;
    mix.weights = {0.5, 0.5};
    mix.means = {{-1.0, 2.0}, {1.0, 2.0}};
    mix.vars = {0.2, 0.2};
    const auto spec = DiffusionSpec::defaults(Family::VE, 2);
    const std::vector<double> mid{0.0, 2.0};
    const auto s = exact_score(spec, mix, 3.0, mid);
    CHECK(std::abs(s[0]) < 1e-14);
    CHECK(std::abs(s[1]) < 1e-14);
  }

  TEST_CASE("score agrees with finite differences of the log-density") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto pm = MixtureTarget::point_mass({-1.0});
    const double h = 1e-5;
    const std::vector<double> x{0.0}, xp{h}, xm{-h};
    const double fd = (marginal_logdensity(spec, pm, 1.0, xp) - marginal_logdensity(spec, pm, 1.0, xm)) / (2 * h);
    CHECK(std::abs(exact_score(spec, pm, 1.0, x)[0] - fd) < 1e-6);

    MixtureTarget mix;
    mix.weights = {0.3, 0.7};
    mix.means = {{-1.0, 0.5}, {1.5, -0.2}};
    mix.vars = {0.1, 0.4};
    const auto s2 = DiffusionSpec::defaults(Family::CSubVP, 2);
    const std::vector<double> y{0.3, 0.8};
    const auto sc = exact_score(s2, mix, 2.0, y);
    const auto jac = exact_score_jacobian(s2, mix, 2.0, y);
    for (std::size_t j = 0; j < 2; ++j) {
      auto yp = y, ym = y;
      yp[j] += h;
      ym[j] -= h;
      const double d = (marginal_logdensity(s2, mix, 2.0, yp) - marginal_logdensity(s2, mix, 2.0, ym)) / (2 * h);
      CHECK(sc[j] == doctest::Approx(d).epsilon(1e-6));
      const auto sp = exact_score(s2, mix, 2.0, yp), sm = exact_score(s2, mix, 2.0, ym);
      for (std::size_t i = 0; i < 2; ++i)
        CHECK(jac[i * 2 + j] == doctest::Approx((sp[i] - sm[i]) / (2 * h)).epsilon(1e-5));
    }
  }

  TEST_CASE("noise wrappers") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto base = exact_score_field(spec, MixtureTarget::point_mass({-1.0}));
    const std::vector<double> x{0.4};
    std::vector<double> b(1), n(1), n2(1);

    const auto same = noisy_score(base, {NoiseMode::PerEvalGaussian, 0.0, 7});
    base.eval(2.0, x, b, {});
    same.eval(2.0, x, n, {});
    CHECK(b[0] == n[0]);

    const auto noisy = noisy_score(base, {NoiseMode::PerEvalGaussian, 0.1, 7});
    double sum = 0.0, sum2 = 0.0;
    const std::size_t m = 200000;
    for (std::size_t i = 0; i < m; ++i) {
      noisy.eval(2.0, x, n, {i, 3, 0});
      const double d2 = (n[0] - b[0]) * (n[0] - b[0]);
      sum += d2;
      sum2 += d2 * d2;
    }
    const double mean = sum / m;
    const double se = std::sqrt((sum2 / m - mean * mean) / m);
    CHECK(std::abs(mean - 0.01) < 3 * se);

    noisy.eval(2.0, x, n, {5, 6, 1});
    noisy.eval(2.0, x, n2, {5, 6, 1});
    CHECK(n[0] == n2[0]);
    const auto again = noisy_score(base, {NoiseMode::PerEvalGaussian, 0.1, 7});
    again.eval(2.0, x, n2, {5, 6, 1});
    CHECK(n[0] == n2[0]);

    const auto frozen = noisy_score(base, {NoiseMode::FrozenOffset, 0.1, 7});
    frozen.eval(2.0, x, n, {1, 2, 0});
    frozen.eval(2.0, x, n2, {9, 9, 0});
    CHECK(n[0] == n2[0]);
    CHECK(std::abs(n[0] - b[0]) == doctest::Approx(0.1));
  }

  TEST_CASE("explicit score matching") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto target = MixtureTarget::gaussian({0.5}, 0.8);
    const auto oracle = exact_score_field(spec, target);
    LossPlan plan;
    plan.n = 20000;
    CHECK(esm_loss(oracle, oracle, spec, target, plan).mean == 0.0);
    const auto e = esm_loss(offset_field(oracle, 0.3), oracle, spec, target, plan);
    CHECK(e.mean == doctest::Approx(0.09).epsilon(1e-9));
  }

  TEST_CASE("implicit score matching") {
    const auto spec = DiffusionSpec::defaults(Family::VP);  // N(0,1) is invariant under VP
    const auto target = MixtureTarget::gaussian({0.0}, 1.0);
    LossPlan plan;
    plan.n = 200000;
    const auto fam = AffineScoreFamily::constant({0.0, spec.T}, -1.0, {0.0});
    const auto ism = ism_loss(fam.field(), spec, target, plan);
    CHECK(std::abs(ism.mean + 1.0) < 3 * ism.std_error);

    const auto zero = AffineScoreFamily::constant({0.0, spec.T}, 0.0, {0.0});
    CHECK(ism_loss(zero.field(), spec, target, plan).mean == 0.0);

    const ScoreField no_div(1, [](double, std::span<const double>, std::span<double> o, const EvalKey&) { o[0] = 0; });
    CHECK_THROWS_AS(ism_loss(no_div, spec, target, plan), CapabilityError);
  }

  TEST_CASE("denoising score matching") {
    const auto spec = DiffusionSpec::defaults(Family::COU);
    const auto target = MixtureTarget::point_mass({-1.0});
    LossPlan plan;
    plan.n = 20000;
    // For a point mass the conditional score is the marginal score.
    const auto cond = exact_score_field(spec, target);
    CHECK(dsm_loss(cond, spec, target, plan).mean < 1e-20);

    plan.weighting = Weighting::KernelVariance;
    const auto fam = AffineScoreFamily::constant({0.0, spec.T}, -0.4, {0.1});
    const auto a = dsm_loss(fam.field(), spec, target, plan);
    const auto b = dsm_loss_reparam(fam.field(), spec, target, plan);
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-9));

    plan.t_eps_fraction = 0.0;
    CHECK_THROWS_AS(dsm_loss(fam.field(), spec, target, plan), DomainError);
  }

  TEST_CASE("sliced score matching") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto target = MixtureTarget::gaussian({0.5}, 0.8);
    LossPlan plan;
    plan.n = 50000;
    const auto fam = AffineScoreFamily::constant({0.0, spec.T}, -0.7, {0.2});
    const auto ism = ism_loss(fam.field(), spec, target, plan);
    const auto ssm = ssm_loss(fam.field(), spec, target, plan, 4, affine_directional(fam));
    CHECK(std::abs(ssm.mean - ism.mean) < 3 * (ssm.std_error + ism.std_error));
    const auto fd = ssm_loss(fam.field(), spec, target, plan, 4);
    CHECK(fd.mean == doctest::Approx(ssm.mean).epsilon(1e-6));
    const auto zero = AffineScoreFamily::constant({0.0, spec.T}, 0.0, {0.0});
    CHECK(ssm_loss(zero.field(), spec, target, plan, 2).mean == 0.0);

    // More projections shrink the spread of the estimator.
    plan.n = 200;
    auto spread = [&](std::size_t proj) {
      double s = 0.0, s2 = 0.0;
      for (std::uint64_t seed = 0; seed < 50; ++seed) {
        plan.seed = seed;
        const double v = ssm_loss(fam.field(), spec, target, plan, proj, affine_directional(fam)).mean;
        s += v;
        s2 += v * v;
      }
      return s2 / 50 - (s / 50) * (s / 50);
    };
    CHECK(spread(64) <= spread(1));
  }

  TEST_CASE("score Lipschitz constant") {
    const auto spec = DiffusionSpec::defaults(Family::VP);
    const auto g = score_lipschitz(spec, MixtureTarget::gaussian({0.0}, 1.0), 0.0);
    CHECK(g.value == doctest::Approx(1.0));
    CHECK(g.exact);
    const auto ou = DiffusionSpec::defaults(Family::OU);
    const auto pm = score_lipschitz(ou, MixtureTarget::point_mass({-1.0}), 3.0);
    CHECK(pm.value == doctest::Approx(1.0 / kernel(ou, 3.0).cond_var()));
    CHECK_THROWS_AS(score_lipschitz(ou, MixtureTarget::point_mass({-1.0}), 0.0), DomainError);
  }
}
