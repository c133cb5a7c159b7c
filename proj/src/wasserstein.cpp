#include "cdpm/wasserstein.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cdpm/errors.hpp"
#include "cdpm/rng.hpp"

namespace cdpm {

namespace {

void require_same_shape(const Samples& a, const Samples& b) {
  if (a.n != b.n) throw UsageError("W2 estimators need equal sample counts");
  if (a.d != b.d) throw UsageError("W2 estimators need equal dimensions");
  if (a.n == 0) throw UsageError("W2 estimators need at least one sample");
}

double sq_dist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

std::vector<double> cost_matrix(const Samples& a, const Samples& b) {
  std::vector<double> c(a.n * b.n);
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j) c[i * b.n + j] = sq_dist(a.row(i), b.row(j));
  return c;
}

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

struct EntropicResult {
  double dual = 0.0;        // <a, f> + <b, g>
  double transport = 0.0;   // <P, C>
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> trace;
};

// Log-domain Sinkhorn with uniform marginals.
EntropicResult entropic_ot(const std::vector<double>& C, std::size_t n, std::size_t m, const SinkhornOptions& opt) {
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));

  auto update_f = [&](double eps) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - C[i * m + j]) / eps + log_b;
      f[i] = -eps * log_sum_exp(buf.data(), m);
    }
  };
  auto update_g = [&](double eps) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - C[i * m + j]) / eps + log_a;
      g[j] = -eps * log_sum_exp(buf.data(), n);
    }
  };
  auto row_violation = [&](double eps) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += std::exp((f[i] + g[j] - C[i * m + j]) / eps + log_a + log_b);
      v += std::abs(row - std::exp(log_a));
    }
    return v;
  };

  if (opt.eps_scaling) {
    const double cmax = *std::max_element(C.begin(), C.end());
    double eps = std::max(cmax, opt.reg);
    while (eps > opt.reg * 1.0000001) {
      for (int it = 0; it < 10; ++it) {
        update_f(eps);
        update_g(eps);
      }
      eps = std::max(opt.reg, eps * 0.5);
    }
  }

  EntropicResult r;
  const double eps = opt.reg;
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    update_f(eps);
    update_g(eps);
    r.iterations = it + 1;
    double dual = 0.0;
    for (double fi : f) dual += fi;
    dual *= std::exp(log_a);
    double dg = 0.0;
    for (double gj : g) dg += gj;
    dual += dg * std::exp(log_b);
    r.trace.push_back(dual);
    // The marginal check costs as much as an iteration; run it every few steps.
    if ((it % 5 == 4 || it + 1 == opt.max_iters) && row_violation(eps) < opt.tol) {
      r.converged = true;
      break;
    }
  }
  r.dual = r.trace.empty() ? 0.0 : r.trace.back();
  double tc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double c = C[i * m + j];
      tc += c * std::exp((f[i] + g[j] - c) / eps + log_a + log_b);
    }
  r.transport = tc;
  return r;
}

}  // namespace

std::string_view to_string(W2Method m) {
  switch (m) {
    case W2Method::Sorted1D: return "sorted1d";
    case W2Method::Assignment: return "assignment";
    case W2Method::Sinkhorn: return "sinkhorn";
    case W2Method::GaussianClosedForm: return "gaussian";
  }
  return "?";
}

W2Method parse_w2_method(std::string_view name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "sorted1d" || key == "sorted") return W2Method::Sorted1D;
  if (key == "assignment" || key == "exact") return W2Method::Assignment;
  if (key == "sinkhorn") return W2Method::Sinkhorn;
  if (key == "gaussian" || key == "gaussianclosedform") return W2Method::GaussianClosedForm;
  throw ConfigError("unknown W2 method '" + std::string(name) + "'");
}

W2Report w2_sorted_1d(const Samples& a, const Samples& b) {
  require_same_shape(a, b);
  if (a.d != 1) throw UsageError("sorted 1-D estimator needs d = 1");
  std::vector<double> x = a.data, y = b.data;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  W2Report r;
  r.value = std::sqrt(s / static_cast<double>(a.n));
  r.method = W2Method::Sorted1D;
  r.n = a.n;
  return r;
}

W2Report w2_assignment(const Samples& a, const Samples& b) {
  require_same_shape(a, b);
  const std::size_t n = a.n;
  if (n > kAssignmentCap)
    throw UsageError("assignment estimator is capped at " + std::to_string(kAssignmentCap) +
                     " points; use the Sinkhorn estimator for larger clouds");
  const std::vector<double> C = cost_matrix(a, b);
  // Shortest augmenting path with potentials, 1-based internal indexing.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      const double* crow = C.data() + (i0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = crow[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += C[(p[j] - 1) * n + (j - 1)];
  W2Report r;
  r.value = std::sqrt(std::max(0.0, total / static_cast<double>(n)));
  r.method = W2Method::Assignment;
  r.n = n;
  return r;
}

W2Report w2_sinkhorn(const Samples& a, const Samples& b, const SinkhornOptions& opt) {
  require_same_shape(a, b);
  if (!(opt.reg > 0.0)) throw ConfigError("Sinkhorn needs reg > 0");
  const std::size_t n = a.n;
  const EntropicResult ab = entropic_ot(cost_matrix(a, b), n, n, opt);
  W2Report r;
  r.method = W2Method::Sinkhorn;
  r.n = n;
  r.converged = ab.converged;
  r.iterations = ab.iterations;
  r.trace = ab.trace;
  if (!opt.debiased) {
    r.value = std::sqrt(std::max(0.0, ab.transport));
    return r;
  }
  const EntropicResult aa = entropic_ot(cost_matrix(a, a), n, n, opt);
  const EntropicResult bb = entropic_ot(cost_matrix(b, b), n, n, opt);
  r.converged = ab.converged && aa.converged && bb.converged;
  r.value = std::sqrt(std::max(0.0, ab.dual - 0.5 * (aa.dual + bb.dual)));
  return r;
}

double w2_gaussian(std::span<const double> m1, double v1, std::span<const double> m2, double v2) {
  if (m1.size() != m2.size()) throw UsageError("Gaussian W2 needs means of equal dimension");
  if (!(v1 >= 0.0 && v2 >= 0.0)) throw DomainError("Gaussian W2 needs nonnegative variances");
  const double ds = std::sqrt(v1) - std::sqrt(v2);
  return std::sqrt(sq_dist(m1, m2) + static_cast<double>(m1.size()) * ds * ds);
}

double bootstrap_std_error(const Samples& a, const Samples& b, const W2Estimator& est, std::size_t reps,
                           std::uint64_t seed) {
  require_same_shape(a, b);
  if (reps < 2) throw UsageError("bootstrap needs at least 2 replicates");
  std::vector<double> vals;
  vals.reserve(reps);
  Samples ra(a.n, a.d), rb(b.n, b.d);
  for (std::size_t r = 0; r < reps; ++r) {
    auto g = make_stream({seed, role(StreamRole::Bootstrap), r});
    for (std::size_t i = 0; i < a.n; ++i) {
      const auto ia = static_cast<std::size_t>(uniform01(g) * static_cast<double>(a.n)) % a.n;
      const auto ib = static_cast<std::size_t>(uniform01(g) * static_cast<double>(b.n)) % b.n;
      std::copy_n(a.row(ia).begin(), a.d, ra.row(i).begin());
      std::copy_n(b.row(ib).begin(), b.d, rb.row(i).begin());
    }
    vals.push_back(est(ra, rb).value);
  }
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(reps);
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(reps - 1));
}

W2Report w2_auto(const Samples& a, const Samples& b, const SinkhornOptions& fallback) {
  if (a.d == 1) return w2_sorted_1d(a, b);
  if (a.n <= kAssignmentCap) return w2_assignment(a, b);
  return w2_sinkhorn(a, b, fallback);
}

}  // namespace cdpm
