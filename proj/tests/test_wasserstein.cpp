#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdpm/errors.hpp"
#include "cdpm/rng.hpp"
#include "cdpm/wasserstein.hpp"

using namespace cdpm;

namespace {

Samples random_cloud(std::size_t n, std::size_t d, std::uint64_t seed, double shift = 0.0) {
  auto g = make_stream({seed, 77});
  Samples s(n, d);
  for (double& v : s.data) v = standard_normal(g) + shift;
  return s;
}

double brute_force(const Samples& a, const Samples& b) {
  std::vector<std::size_t> p(a.n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.n; ++i)
      for (std::size_t j = 0; j < a.d; ++j) c += std::pow(a.row(i)[j] - b.row(p[i])[j], 2);
    best = std::min(best, c);
  } while (std::next_permutation(p.begin(), p.end()));
  return std::sqrt(best / static_cast<double>(a.n));
}

}  // namespace

TEST_SUITE("wasserstein") {
  TEST_CASE("sorted 1-D axioms") {
    const auto a = random_cloud(100, 1, 1);
    CHECK(w2_sorted_1d(a, a).value == 0.0);
    Samples b = a;
    for (double& v : b.data) v += 0.75;
    CHECK(w2_sorted_1d(a, b).value == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(w2_sorted_1d(a, random_cloud(99, 1, 2)), UsageError);
  }

  TEST_CASE("hand-listed n = 6 against all permutations") {
    const Samples a(6, 1, {0.1, -1.3, 2.2, 0.7, -0.4, 1.9});
    const Samples b(6, 1, {1.0, 0.2, -2.0, 0.5, 3.1, -0.6});
    CHECK(w2_sorted_1d(a, b).value == doctest::Approx(brute_force(a, b)).epsilon(1e-12));
    CHECK(w2_assignment(a, b).value == doctest::Approx(brute_force(a, b)).epsilon(1e-12));
  }

  TEST_CASE("assignment") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto a = random_cloud(5, 2, 2 * s), b = random_cloud(5, 2, 2 * s + 1);
      CHECK(w2_assignment(a, b).value == doctest::Approx(brute_force(a, b)).epsilon(1e-12));
    }
    const auto a = random_cloud(40, 1, 3), b = random_cloud(40, 1, 4);
    CHECK(std::abs(w2_assignment(a, b).value - w2_sorted_1d(a, b).value) < 1e-12);
    const auto c = random_cloud(30, 2, 5);
    CHECK(w2_assignment(c, c).value == 0.0);
    const auto big = random_cloud(kAssignmentCap + 1, 1, 6);
    CHECK_THROWS_AS(w2_assignment(big, big), UsageError);
  }

  TEST_CASE("Sinkhorn") {
    const auto a = random_cloud(64, 2, 7), b = random_cloud(64, 2, 8, 0.5);
    SinkhornOptions opt;
    opt.reg = 0.01;
    const auto r = w2_sinkhorn(a, b, opt);
    CHECK(r.method == W2Method::Sinkhorn);
    CHECK(r.value == doctest::Approx(w2_assignment(a, b).value).epsilon(0.05));
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] >= r.trace[i - 1] - 1e-12);

    opt.debiased = true;
    CHECK(w2_sinkhorn(a, a, opt).value <= 1e-6);

    opt.debiased = false;
    opt.max_iters = 2;
    opt.eps_scaling = false;
    opt.reg = 1e-4;
    const auto stopped = w2_sinkhorn(a, b, opt);
    CHECK_FALSE(stopped.converged);
    CHECK(std::isfinite(stopped.value));
  }

  TEST_CASE("Gaussian closed form") {
    const std::vector<double> m{0.0, 1.0}, n{3.0, 5.0};
    CHECK(w2_gaussian(m, 2.0, m, 2.0) == 0.0);
    CHECK(w2_gaussian(m, 2.0, n, 2.0) == doctest::Approx(5.0));
    CHECK(w2_gaussian(m, 1.0, m, 4.0) == doctest::Approx(std::sqrt(2.0)));
  }

  TEST_CASE("auto dispatch and bootstrap") {
    CHECK(w2_auto(random_cloud(20, 1, 1), random_cloud(20, 1, 2)).method == W2Method::Sorted1D);
    CHECK(w2_auto(random_cloud(20, 2, 1), random_cloud(20, 2, 2)).method == W2Method::Assignment);
    const auto a = random_cloud(200, 1, 1), b = random_cloud(200, 1, 2, 1.0);
    const double se = bootstrap_std_error(a, b, w2_sorted_1d, 100, 3);
    CHECK(se > 0.0);
    CHECK(se < 0.3);
    CHECK(se == bootstrap_std_error(a, b, w2_sorted_1d, 100, 3));
  }

  TEST_CASE("method names") {
    for (auto m : {W2Method::Sorted1D, W2Method::Assignment, W2Method::Sinkhorn, W2Method::GaussianClosedForm})
      CHECK(parse_w2_method(to_string(m)) == m);
  }
}
