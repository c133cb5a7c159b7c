#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cdpm/errors.hpp"
#include "cdpm/reverse_sampler.hpp"

using namespace cdpm;

namespace {

ScoreField zero_field(std::size_t d) {
  return ScoreField(d, [](double, std::span<const double>, std::span<double> o, const EvalKey&) {
    std::fill(o.begin(), o.end(), 0.0);
  });
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

}  // namespace

TEST_SUITE("reverse_sampler") {
  TEST_CASE("reverse drift special cases") {
    const auto ve = DiffusionSpec::defaults(Family::VE);
    const auto target = MixtureTarget::gaussian({0.2}, 0.5);
    const auto ve_proc = make_reverse_process(ve, exact_score_field(ve, target));
    const std::vector<double> x{0.7};
    const double tau = ve.T - 3.0;
    CHECK(reverse_drift(ve_proc, 3.0, x)[0] ==
          doctest::Approx(diffusion_sq(ve, tau) * exact_score(ve, target, tau, x)[0]).epsilon(1e-14));

    auto ou = DiffusionSpec::defaults(Family::OU);
    ou.mu = {0.3};
    const auto ou_proc = make_reverse_process(ou, zero_field(1));
    CHECK(reverse_drift(ou_proc, 2.0, x)[0] == doctest::Approx(ou.theta * (0.7 - 0.3)));

    // COU with a Gaussian marginal: the drift is affine with slope -theta - sigma^2 / V.
    const auto cou = DiffusionSpec::defaults(Family::COU);
    const auto cou_proc = make_reverse_process(cou, exact_score_field(cou, target));
    const double t = 4.0;
    const auto k = kernel(cou, cou.T - t);
    const double V = k.mean_factor * k.mean_factor * 0.5 + k.cond_var();
    const double slope = -cou.theta - cou.sigma * cou.sigma / V;
    const double intercept = cou.sigma * cou.sigma * k.mean_factor * 0.2 / V;
    for (double xv : {-2.0, 0.0, 1.5}) {
      const std::vector<double> p{xv};
      CHECK(reverse_drift(cou_proc, t, p)[0] == doctest::Approx(slope * xv + intercept).epsilon(1e-12));
    }
    CHECK_THROWS_AS(reverse_drift(cou_proc, cou.T, x), DomainError);
  }

  TEST_CASE("one noiseless step equals an explicit drift step") {
    const auto spec = DiffusionSpec::defaults(Family::COU);
    const auto target = MixtureTarget::gaussian({-1.0}, 0.3);
    ReverseProcess proc{spec, exact_score_field(spec, target), Samples(1, 1, 2.5), 1e-3};
    SamplerConfig cfg;
    cfg.n_steps = 1;
    cfg.n_paths = 1;
    cfg.brownian = false;
    const auto out = sample_em(proc, cfg);
    const std::vector<double> x{2.5};
    const double expected = 2.5 + proc.horizon() * reverse_drift(proc, 0.0, x)[0];
    CHECK(out.final_state().data[0] == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("exact-score recovery of a point mass") {
    const auto spec = DiffusionSpec::defaults(Family::COU);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::point_mass({-1.0})));
    SamplerConfig cfg;
    cfg.n_steps = 500;
    cfg.n_paths = 10000;
    const auto m = moments(sample_em(proc, cfg).final_state().column(0));
    CHECK(std::abs(m.mean + 1.0) < 3.0 * std::sqrt(m.var / 10000.0));
  }

  TEST_CASE("results do not depend on the thread count") {
    const auto spec = DiffusionSpec::defaults(Family::CVP);
    const auto proc = make_reverse_process(
        spec, noisy_score(exact_score_field(spec, MixtureTarget::gaussian({0.5}, 0.2)), {NoiseMode::PerEvalGaussian, 0.3, 4}));
    SamplerConfig cfg;
    cfg.n_steps = 100;
    cfg.n_paths = 300;
    cfg.method = Method::PC;
    cfg.snr = 0.1;
    cfg.seed = 11;
    const auto a = sample(proc, cfg);
    cfg.threads = 3;
    const auto b = sample(proc, cfg);
    CHECK(a.final_state().data == b.final_state().data);
  }

  TEST_CASE("snr = 0 reproduces Euler-Maruyama exactly") {
    const auto spec = DiffusionSpec::defaults(Family::SubVP);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::gaussian({0.5}, 0.2)));
    SamplerConfig cfg;
    cfg.n_steps = 80;
    cfg.n_paths = 200;
    cfg.seed = 3;
    const auto em = sample_em(proc, cfg);
    cfg.snr = 0.0;
    const auto pc = sample_pc(proc, cfg);
    CHECK(em.final_state().data == pc.final_state().data);
  }

  TEST_CASE("saved states follow save_every") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::point_mass({-1.0})));
    SamplerConfig cfg;
    cfg.n_steps = 100;
    cfg.n_paths = 10;
    cfg.save_every = 25;
    const auto out = sample_em(proc, cfg);
    CHECK(out.states.size() == 5);
    CHECK(out.steps.back() == 100);
    CHECK(out.times.back() == doctest::Approx(proc.horizon()));
    cfg.save_every = 0;
    CHECK(sample_em(proc, cfg).states.size() == 2);
  }

  TEST_CASE("divergence is reported with the step") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const ScoreField bad(1, [](double, std::span<const double>, std::span<double> o, const EvalKey&) {
      o[0] = std::numeric_limits<double>::quiet_NaN();
    });
    SamplerConfig cfg;
    cfg.n_steps = 10;
    cfg.n_paths = 4;
    CHECK_THROWS_AS(sample_em(make_reverse_process(spec, bad), cfg), IntegrationDiverged);
  }

  TEST_CASE("Langevin corrector keeps the marginal") {
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto target = MixtureTarget::gaussian({1.0}, 0.5);
    const double t = 2.0;
    const auto k = kernel(spec, t);
    const double m = k.mean_factor * 1.0;
    const double v = k.mean_factor * k.mean_factor * 0.5 + k.cond_var();
    const std::size_t n = 4000;
    const auto out = langevin_correct(exact_score_field(spec, target), t, Samples(n, 1, 3.0), 200, 0.2, 5);
    const auto mo = moments(out.column(0));
    CHECK(std::abs(mo.mean - m) < 3.0 * std::sqrt(v / n));
    CHECK(std::abs(mo.var - v) < 3.0 * v * std::sqrt(2.0 / (n - 1)));
  }

  TEST_CASE("forward sampling") {
    const auto ve = DiffusionSpec::defaults(Family::VE);
    const auto target = MixtureTarget::gaussian({0.3}, 0.4);
    CHECK(sample_forward(ve, target, 0.0, 50, 2, ForwardMode::ExactKernel).data == target.sample(50, 2).data);

    const std::size_t n = 100000;
    const auto x = sample_forward(ve, MixtureTarget::point_mass({0.0}), ve.T, n, 1, ForwardMode::ExactKernel);
    const auto mv = moments(x.column(0));
    CHECK(std::abs(mv.var - 0.2475) < 3.0 * 0.2475 * std::sqrt(2.0 / n));

    const auto cou = DiffusionSpec::defaults(Family::COU);
    const auto em = moments(sample_forward(cou, target, 2.0, 20000, 3, ForwardMode::EM, 1e-3).column(0));
    const auto ex = moments(sample_forward(cou, target, 2.0, 20000, 4, ForwardMode::ExactKernel).column(0));
    const double se = std::sqrt(em.var / 20000 + ex.var / 20000);
    CHECK(std::abs(em.mean - ex.mean) < 3.0 * se);
    CHECK(std::abs(em.var - ex.var) < 3.0 * (em.var + ex.var) * std::sqrt(1.0 / 19999));
  }

  TEST_CASE("coupled paths with equal starts never separate") {
    const auto spec = DiffusionSpec::defaults(Family::COU);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::gaussian({0.0}, 1.0)));
    SamplerConfig cfg;
    cfg.n_steps = 200;
    cfg.n_paths = 50;
    const Samples init = MixtureTarget::gaussian({0.0}, 4.0).sample(50, 9);
    const auto rec = coupled_contraction(proc, cfg, init, init);
    for (double r : rec.rms) CHECK(r == 0.0);
    CHECK_FALSE(rec.fitted);
  }

  TEST_CASE("coupled paths contract for COU") {
    const auto spec = DiffusionSpec::defaults(Family::COU);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::gaussian({0.0}, 1.0)));
    SamplerConfig cfg;
    cfg.n_steps = 500;
    cfg.n_paths = 200;
    const auto x = MixtureTarget::gaussian({0.0}, 30.0).sample(200, 1);
    const auto y = MixtureTarget::gaussian({0.0}, 30.0).sample(200, 2);
    const auto rec = coupled_contraction(proc, cfg, x, y);
    REQUIRE(rec.fitted);
    CHECK(rec.rate < 0.0);
  }

  TEST_CASE("OU also contracts for a narrow target") {
    // Not a guarantee, only an observation: the score term dominates the expansive drift.
    const auto spec = DiffusionSpec::defaults(Family::OU);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::gaussian({0.0}, 1.0)));
    SamplerConfig cfg;
    cfg.n_steps = 500;
    cfg.n_paths = 200;
    const auto x = MixtureTarget::gaussian({0.0}, 1.0).sample(200, 1);
    const auto y = MixtureTarget::gaussian({0.0}, 1.0).sample(200, 2);
    const auto rec = coupled_contraction(proc, cfg, x, y);
    MESSAGE("OU coupled log-rate for N(0,1): " << rec.rate);
    CHECK(rec.fitted);
  }

  TEST_CASE("nested grids share Brownian paths") {
    const auto spec = DiffusionSpec::defaults(Family::COU);
    const auto proc = make_reverse_process(spec, exact_score_field(spec, MixtureTarget::point_mass({-1.0})));
    SamplerConfig cfg;
    cfg.n_paths = 100;
    const auto out = sample_em_nested(proc, cfg, {50, 100, 400});
    REQUIRE(out.size() == 3);
    // Adding coarser grids does not change the finest one.
    const auto alone = sample_em_nested(proc, cfg, {400});
    CHECK(alone[0].data == out[2].data);
    // Shared increments: the coarse-to-fine gap shrinks as the coarse grid refines.
    auto gap = [&](const Samples& c) {
      double g = 0.0;
      for (std::size_t i = 0; i < 100; ++i) g += std::abs(c.data[i] - out[2].data[i]);
      return g / 100.0;
    };
    CHECK(gap(out[0]) > gap(out[1]));
    CHECK(gap(out[1]) > 0.0);
    CHECK_THROWS_AS(sample_em_nested(proc, cfg, {30, 400}), UsageError);
  }

  TEST_CASE("fit_log_rate") {
    const std::vector<double> t{0, 1, 2, 3};
    std::vector<double> v;
    for (double x : t) v.push_back(2.0 * std::exp(-0.7 * x));
    const auto fit = fit_log_rate(t, v);
    REQUIRE(fit.has_value());
    CHECK(fit->first == doctest::Approx(-0.7));
    CHECK(fit->second == doctest::Approx(std::log(2.0)));
    const std::vector<double> zeros(4, 0.0);
    CHECK_FALSE(fit_log_rate(t, zeros).has_value());
  }

  TEST_CASE("configuration errors") {
    SamplerConfig cfg;
    cfg.n_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_method("PC") == Method::PC);
    CHECK_THROWS_AS(parse_method("rk4"), ConfigError);
  }
}
