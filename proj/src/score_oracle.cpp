#include "cdpm/score_oracle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "cdpm/errors.hpp"
#include "cdpm/rng.hpp"

namespace cdpm {

namespace {

// Mean of the kernel applied to a component centred at `center`:
// mu + f (center - mu), with mu the drift centre (zero outside OU/COU).
inline double kernel_mean(const DiffusionSpec& spec, double f, double center, std::size_t j) {
  const double m = spec.mu_at(j);
  return m + f * (center - m);
}

void check_dims(const MixtureTarget& target, std::span<const double> x) {
  if (x.size() != target.dim()) throw UsageError("point dimension does not match target dimension");
}

struct Responsibilities {
  std::vector<double> gamma;  // posterior component weights
  std::vector<double> var;    // per-component marginal variance f^2 v + s^2
  double log_norm = 0.0;      // log sum_i w_i N(x; m_i, V_i)
};

void responsibilities(const DiffusionSpec& spec, const MixtureTarget& target, double t, std::span<const double> x,
                      Responsibilities& r) {
  check_dims(target, x);
  const PerturbationKernel k = kernel(spec, t);
  const double f = k.mean_factor;
  const double s2 = k.cond_var();
  const std::size_t m = target.size();
  const std::size_t d = x.size();
  r.gamma.resize(m);
  r.var.resize(m);
  double max_log = -std::numeric_limits<double>::infinity();
  // Empirical targets repeat one weight and one variance, so the log terms are cached.
  double last_w = -1.0, last_v = -1.0, log_w = 0.0, log_v = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double V = f * f * target.vars[i] + s2;
    if (!(V > 0.0)) throw DomainError("marginal density is singular: point-mass component at t = 0");
    r.var[i] = V;
    if (target.weights[i] <= 0.0) {
      r.gamma[i] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - kernel_mean(spec, f, target.means[i][j], j);
      sq += diff * diff;
    }
    if (target.weights[i] != last_w) {
      last_w = target.weights[i];
      log_w = std::log(last_w);
    }
    if (V != last_v) {
      last_v = V;
      log_v = 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * V);
    }
    const double lp = log_w - log_v - 0.5 * sq / V;
    r.gamma[i] = lp;
    max_log = std::max(max_log, lp);
  }
  double total = 0.0;
  for (double& g : r.gamma) {
    g = std::exp(g - max_log);
    total += g;
  }
  for (double& g : r.gamma) g /= total;
  r.log_norm = max_log + std::log(total);
}

}  // namespace

// ---------------------------------------------------------------------------
// MixtureTarget

MixtureTarget MixtureTarget::point_mass(std::vector<double> x0) {
  MixtureTarget t;
  t.weights = {1.0};
  t.means = {std::move(x0)};
  t.vars = {0.0};
  return t;
}

MixtureTarget MixtureTarget::gaussian(std::vector<double> mean, double var) {
  MixtureTarget t;
  t.weights = {1.0};
  t.means = {std::move(mean)};
  t.vars = {var};
  return t;
}

MixtureTarget MixtureTarget::empirical(const Samples& points) {
  if (points.n == 0) throw UsageError("empirical target needs at least one point");
  MixtureTarget t;
  t.weights.assign(points.n, 1.0 / static_cast<double>(points.n));
  t.vars.assign(points.n, 0.0);
  t.means.reserve(points.n);
  for (std::size_t i = 0; i < points.n; ++i) {
    auto r = points.row(i);
    t.means.emplace_back(r.begin(), r.end());
  }
  return t;
}

bool MixtureTarget::has_point_mass() const {
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (vars[i] == 0.0 && weights[i] > 0.0) return true;
  return false;
}

void MixtureTarget::validate() const {
  if (weights.empty()) throw ConfigError("mixture target needs at least one component");
  if (means.size() != weights.size() || vars.size() != weights.size())
    throw ConfigError("mixture target: weights, means and vars must have equal length");
  const std::size_t d = means.front().size();
  if (d == 0) throw ConfigError("mixture target: zero-dimensional means");
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ConfigError("mixture target: negative weight");
    if (!(vars[i] >= 0.0) || !std::isfinite(vars[i])) throw ConfigError("mixture target: invalid component variance");
    if (means[i].size() != d) throw ConfigError("mixture target: ragged means");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("mixture target: weights must sum to 1");
}

void MixtureTarget::sample_one(std::uint64_t seed, std::uint64_t index, std::span<double> out) const {
  auto g = make_stream({seed, role(StreamRole::Target), index});
  std::size_t comp = 0;
  if (weights.size() > 1) {
    double u = uniform01(g);
    for (comp = 0; comp + 1 < weights.size(); ++comp) {
      u -= weights[comp];
      if (u < 0.0) break;
    }
  }
  const double sd = std::sqrt(vars[comp]);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = means[comp][j];
    if (sd > 0.0) out[j] += sd * standard_normal(g);
  }
}

Samples MixtureTarget::sample(std::size_t n, std::uint64_t seed) const {
  validate();
  Samples s(n, dim());
  for (std::size_t i = 0; i < n; ++i) sample_one(seed, i, s.row(i));
  return s;
}

double MixtureTarget::second_moment() const {
  const double d = static_cast<double>(dim());
  double m2 = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double sq = 0.0;
    for (double v : means[i]) sq += v * v;
    m2 += weights[i] * (sq + d * vars[i]);
  }
  return m2;
}

// ---------------------------------------------------------------------------
// ScoreField

ScoreField::ScoreField(std::size_t dim, Evaluator eval, ScalarFn log_density, ScalarFn divergence)
    : dim_(dim),
      eval_(std::move(eval)),
      log_density_(std::move(log_density)),
      divergence_(std::move(divergence)),
      calls_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

std::vector<double> ScoreField::operator()(double t, std::span<const double> x) const {
  std::vector<double> out(dim_);
  const EvalKey key{~std::uint64_t{0}, calls_->fetch_add(1, std::memory_order_relaxed), 0};
  eval_(t, x, out, key);
  return out;
}

double ScoreField::log_density(double t, std::span<const double> x) const {
  if (!log_density_) throw CapabilityError("score field carries no exact log-density");
  return log_density_(t, x);
}

double ScoreField::divergence(double t, std::span<const double> x) const {
  if (!divergence_) throw CapabilityError("score field carries no divergence");
  return divergence_(t, x);
}

// ---------------------------------------------------------------------------
// Exact marginals

double marginal_logdensity(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                           std::span<const double> x) {
  Responsibilities r;
  responsibilities(spec, target, t, x, r);
  return r.log_norm;
}

namespace {

void exact_score_into(const DiffusionSpec& spec, const MixtureTarget& target, double t, std::span<const double> x,
                      std::span<double> out, Responsibilities& r) {
  responsibilities(spec, target, t, x, r);
  const double f = kernel(spec, t).mean_factor;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double w = r.gamma[i] / r.var[i];
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < x.size(); ++j) out[j] += w * (kernel_mean(spec, f, target.means[i][j], j) - x[j]);
  }
}

}  // namespace

std::vector<double> exact_score(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                                std::span<const double> x) {
  std::vector<double> out(x.size());
  Responsibilities r;
  exact_score_into(spec, target, t, x, out, r);
  return out;
}

std::vector<double> exact_score_jacobian(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                                         std::span<const double> x) {
  Responsibilities r;
  responsibilities(spec, target, t, x, r);
  const double f = kernel(spec, t).mean_factor;
  const std::size_t d = x.size();
  // J = sum_i g_i (-I / V_i) + sum_i g_i a_i a_i^T - abar abar^T,  a_i = (m_i - x) / V_i.
  std::vector<double> J(d * d, 0.0), abar(d, 0.0), a(d);
  double diag = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double g = r.gamma[i];
    if (g == 0.0) continue;
    diag -= g / r.var[i];
    for (std::size_t j = 0; j < d; ++j) a[j] = (kernel_mean(spec, f, target.means[i][j], j) - x[j]) / r.var[i];
    for (std::size_t p = 0; p < d; ++p) {
      abar[p] += g * a[p];
      for (std::size_t q = 0; q < d; ++q) J[p * d + q] += g * a[p] * a[q];
    }
  }
  for (std::size_t p = 0; p < d; ++p) {
    J[p * d + p] += diag;
    for (std::size_t q = 0; q < d; ++q) J[p * d + q] -= abar[p] * abar[q];
  }
  return J;
}

namespace {

// Score of an equal-weight, equal-variance mixture (an empirical measure, say)
// over a flat copy of the centres. Terms below e^-50 of the largest are dropped,
// which is under one ulp of the normaliser even summed over many components.
class UniformMixtureScore {
 public:
  UniformMixtureScore(const DiffusionSpec& spec, const MixtureTarget& target)
      : spec_(spec), m_(target.size()), d_(target.dim()), var_(target.vars.front()) {
    centres_.reserve(m_ * d_);
    for (const auto& c : target.means) centres_.insert(centres_.end(), c.begin(), c.end());
  }

  static bool applies(const MixtureTarget& target) {
    for (std::size_t i = 1; i < target.size(); ++i)
      if (target.weights[i] != target.weights[0] || target.vars[i] != target.vars[0]) return false;
    return target.size() > 1;
  }

  void operator()(double t, std::span<const double> x, std::span<double> out) const {
    const PerturbationKernel k = kernel(spec_, t);
    const double f = k.mean_factor;
    const double V = f * f * var_ + k.cond_var();
    if (!(V > 0.0)) throw DomainError("marginal density is singular: point-mass component at t = 0");
    thread_local std::vector<double> lp, shifted;
    lp.resize(m_);
    shifted.resize(d_);
    // kernel mean of centre c is f c + (1 - f) mu; compare f c against x - (1 - f) mu.
    for (std::size_t j = 0; j < d_; ++j) shifted[j] = x[j] - (1.0 - f) * spec_.mu_at(j);
    const double scale = -0.5 / V;
    double max_lp = -std::numeric_limits<double>::infinity();
    const double* c = centres_.data();
    for (std::size_t i = 0; i < m_; ++i, c += d_) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d_; ++j) {
        const double diff = shifted[j] - f * c[j];
        sq += diff * diff;
      }
      lp[i] = scale * sq;
      max_lp = std::max(max_lp, lp[i]);
    }
    std::fill(out.begin(), out.end(), 0.0);
    double total = 0.0;
    c = centres_.data();
    for (std::size_t i = 0; i < m_; ++i, c += d_) {
      const double rel = lp[i] - max_lp;
      if (rel < -50.0) continue;
      const double g = std::exp(rel);
      total += g;
      for (std::size_t j = 0; j < d_; ++j) out[j] += g * (f * c[j] - shifted[j]);
    }
    for (double& v : out) v /= total * V;
  }

 private:
  DiffusionSpec spec_;
  std::size_t m_, d_;
  double var_;
  std::vector<double> centres_;
};

}  // namespace

ScoreField exact_score_field(const DiffusionSpec& spec, const MixtureTarget& target) {
  spec.validate();
  target.validate();
  if (target.dim() != spec.dim) throw ConfigError("target dimension does not match SDE dimension");
  ScoreField::Evaluator eval;
  if (UniformMixtureScore::applies(target)) {
    eval = [fast = UniformMixtureScore(spec, target)](double t, std::span<const double> x, std::span<double> out,
                                                      const EvalKey&) { fast(t, x, out); };
  } else {
    eval = [spec, target](double t, std::span<const double> x, std::span<double> out, const EvalKey&) {
      thread_local Responsibilities r;
      exact_score_into(spec, target, t, x, out, r);
    };
  }
  auto logp = [spec, target](double t, std::span<const double> x) { return marginal_logdensity(spec, target, t, x); };
  auto div = [spec, target](double t, std::span<const double> x) {
    const auto J = exact_score_jacobian(spec, target, t, x);
    double tr = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) tr += J[j * x.size() + j];
    return tr;
  };
  return ScoreField(spec.dim, eval, logp, div);
}

// ---------------------------------------------------------------------------
// Noise injection

NoiseMode parse_noise_mode(std::string_view name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "perevalgaussian" || key == "pereval" || key == "gaussian") return NoiseMode::PerEvalGaussian;
  if (key == "frozenoffset" || key == "frozen") return NoiseMode::FrozenOffset;
  throw ConfigError("unknown noise mode '" + std::string(name) + "'");
}

ScoreField noisy_score(const ScoreField& base, const NoiseModel& model) {
  if (!(model.epsilon >= 0.0)) throw ConfigError("noise epsilon must be nonnegative");
  if (model.epsilon == 0.0) return base;
  const double eps = model.epsilon;
  const std::size_t d = base.dim();
  ScoreField::Evaluator eval;
  if (model.mode == NoiseMode::PerEvalGaussian) {
    const std::uint64_t seed = model.seed;
    eval = [base, eps, seed](double t, std::span<const double> x, std::span<double> out, const EvalKey& key) {
      base.eval(t, x, out, key);
      auto g = make_stream({seed, role(StreamRole::ScoreNoise), key.path, key.step, key.role});
      for (double& v : out) v += eps * standard_normal(g);
    };
  } else {
    std::vector<double> u(d);
    auto g = make_stream({model.seed, role(StreamRole::ScoreNoise)});
    double norm = 0.0;
    while (norm == 0.0) {
      fill_standard_normal(g, u);
      norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    }
    for (double& v : u) v *= eps / norm;
    eval = [base, u](double t, std::span<const double> x, std::span<double> out, const EvalKey& key) {
      base.eval(t, x, out, key);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += u[j];
    };
  }
  // The perturbed field no longer matches the exact density; drop it.
  return ScoreField(d, eval);
}

// ---------------------------------------------------------------------------
// Affine family

AffineScoreFamily AffineScoreFamily::constant(const std::vector<double>& grid, double a, std::vector<double> offset) {
  AffineScoreFamily fam;
  fam.time_grid = grid;
  fam.A.assign(grid.size(), a);
  fam.c.assign(grid.size(), offset);
  fam.validate();
  return fam;
}

void AffineScoreFamily::validate() const {
  if (time_grid.empty()) throw ConfigError("affine family needs a non-empty time grid");
  if (A.size() != time_grid.size() || c.size() != time_grid.size())
    throw ConfigError("affine family: A and c must match the time grid");
  for (std::size_t i = 1; i < time_grid.size(); ++i)
    if (!(time_grid[i] > time_grid[i - 1])) throw ConfigError("affine family: time grid must be increasing");
  for (const auto& ci : c)
    if (ci.size() != c.front().size()) throw ConfigError("affine family: ragged offsets");
}

std::vector<double> AffineScoreFamily::parameters() const {
  std::vector<double> p(A);
  for (const auto& ci : c) p.insert(p.end(), ci.begin(), ci.end());
  return p;
}

void AffineScoreFamily::set_parameters(std::span<const double> p) {
  if (p.size() != parameter_count()) throw UsageError("affine family: wrong parameter count");
  const std::size_t m = A.size(), d = dim();
  std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(m), A.begin());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) c[i][j] = p[m + i * d + j];
}

namespace {

// Index and weight of the linear interpolation on a grid (clamped).
std::pair<std::size_t, double> locate(const std::vector<double>& grid, double t) {
  if (grid.size() == 1 || t <= grid.front()) return {0, 0.0};
  if (t >= grid.back()) return {grid.size() - 2, 1.0};
  const auto it = std::upper_bound(grid.begin(), grid.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  const std::size_t lo = hi - 1;
  return {lo, (t - grid[lo]) / (grid[hi] - grid[lo])};
}

}  // namespace

double AffineScoreFamily::slope(double t) const {
  if (A.size() == 1) return A.front();
  const auto [i, w] = locate(time_grid, t);
  return (1.0 - w) * A[i] + w * A[i + 1];
}

void AffineScoreFamily::offset(double t, std::span<double> out) const {
  if (c.size() == 1) {
    std::copy(c.front().begin(), c.front().end(), out.begin());
    return;
  }
  const auto [i, w] = locate(time_grid, t);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (1.0 - w) * c[i][j] + w * c[i + 1][j];
}

ScoreField AffineScoreFamily::field() const {
  validate();
  const AffineScoreFamily fam = *this;
  auto eval = [fam](double t, std::span<const double> x, std::span<double> out, const EvalKey&) {
    fam.offset(t, out);
    const double a = fam.slope(t);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += a * x[j];
  };
  auto div = [fam](double t, std::span<const double> x) { return static_cast<double>(x.size()) * fam.slope(t); };
  return ScoreField(dim(), eval, {}, div);
}

DirectionalDerivative affine_directional(const AffineScoreFamily& fam) {
  return [fam](double t, std::span<const double>, std::span<const double> v) {
    return fam.slope(t) * std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
  };
}

// ---------------------------------------------------------------------------
// Score-matching objectives

namespace {

// One Monte-Carlo draw of the shared sampling plan: t ~ U[t_eps, T], x0 from
// the target, x = kernel mean + s(t) z. All randomness of index i comes from
// a stream keyed by (seed, i), so every objective sees the same draws.
struct PlanDraw {
  double t = 0.0;
  double lambda = 1.0;
  double f = 1.0;
  double s = 0.0;
  std::vector<double> x0, z, mean, x;
};

class PlanSampler {
 public:
  PlanSampler(const DiffusionSpec& spec, const MixtureTarget& target, const LossPlan& plan)
      : spec_(spec), target_(target), plan_(plan) {
    spec.validate();
    target.validate();
    if (target.dim() != spec.dim) throw ConfigError("target dimension does not match SDE dimension");
    if (plan.n == 0) throw UsageError("loss estimator needs n >= 1");
    t_lo_ = plan.t_eps_fraction * spec.T;
    if (!(t_lo_ > 0.0)) throw DomainError("time-uniform expectations need t_eps > 0 (s(0) = 0 is singular)");
  }

  // Returns the per-sample stream positioned after the plan draws, for callers
  // needing extra randomness (projection vectors).
  Xoshiro256pp draw(std::size_t i, PlanDraw& d) const {
    const std::size_t dim = spec_.dim;
    auto g = make_stream({plan_.seed, role(StreamRole::Time), i});
    d.t = t_lo_ + (spec_.T - t_lo_) * uniform01(g);
    const PerturbationKernel k = kernel(spec_, d.t);
    d.f = k.mean_factor;
    d.s = k.cond_std;
    d.lambda = plan_.weighting == Weighting::Unit ? 1.0 : k.cond_var();
    d.x0.resize(dim);
    d.z.resize(dim);
    d.mean.resize(dim);
    d.x.resize(dim);
    target_.sample_one(plan_.seed, i, d.x0);
    fill_standard_normal(g, d.z);
    for (std::size_t j = 0; j < dim; ++j) {
      d.mean[j] = kernel_mean(spec_, d.f, d.x0[j], j);
      d.x[j] = d.mean[j] + d.s * d.z[j];
    }
    return g;
  }

  std::size_t n() const { return plan_.n; }
  std::size_t dim() const { return spec_.dim; }

 private:
  const DiffusionSpec& spec_;
  const MixtureTarget& target_;
  const LossPlan& plan_;
  double t_lo_ = 0.0;
};

class Accumulator {
 public:
  void add(double v) {
    ++n_;
    const double delta = v - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (v - mean_);
  }
  MonteCarloEstimate result() const {
    MonteCarloEstimate e;
    e.mean = mean_;
    e.std_error = n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_)) : 0.0;
    return e;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

double sq_norm(std::span<const double> v) { return std::inner_product(v.begin(), v.end(), v.begin(), 0.0); }

EvalKey loss_key(std::size_t i, std::uint64_t role_id = 0) { return EvalKey{i, 0, role_id}; }

}  // namespace

MonteCarloEstimate esm_loss(const ScoreField& s, const ScoreField& oracle, const DiffusionSpec& spec,
                            const MixtureTarget& target, const LossPlan& plan) {
  PlanSampler sampler(spec, target, plan);
  Accumulator acc;
  PlanDraw d;
  std::vector<double> sv(spec.dim), ov(spec.dim);
  for (std::size_t i = 0; i < sampler.n(); ++i) {
    sampler.draw(i, d);
    s.eval(d.t, d.x, sv, loss_key(i));
    oracle.eval(d.t, d.x, ov, loss_key(i));
    double sq = 0.0;
    for (std::size_t j = 0; j < sv.size(); ++j) sq += (sv[j] - ov[j]) * (sv[j] - ov[j]);
    acc.add(d.lambda * sq);
  }
  return acc.result();
}

MonteCarloEstimate ism_loss(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                            const LossPlan& plan) {
  if (!s.has_divergence()) throw CapabilityError("implicit score matching needs the divergence of the score field");
  PlanSampler sampler(spec, target, plan);
  Accumulator acc;
  PlanDraw d;
  std::vector<double> sv(spec.dim);
  for (std::size_t i = 0; i < sampler.n(); ++i) {
    sampler.draw(i, d);
    s.eval(d.t, d.x, sv, loss_key(i));
    acc.add(d.lambda * (sq_norm(sv) + 2.0 * s.divergence(d.t, d.x)));
  }
  return acc.result();
}

MonteCarloEstimate dsm_loss(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                            const LossPlan& plan) {
  PlanSampler sampler(spec, target, plan);
  Accumulator acc;
  PlanDraw d;
  std::vector<double> sv(spec.dim);
  for (std::size_t i = 0; i < sampler.n(); ++i) {
    sampler.draw(i, d);
    s.eval(d.t, d.x, sv, loss_key(i));
    const double s2 = d.s * d.s;
    double sq = 0.0;
    for (std::size_t j = 0; j < sv.size(); ++j) {
      const double cond = (d.mean[j] - d.x[j]) / s2;
      sq += (sv[j] - cond) * (sv[j] - cond);
    }
    acc.add(d.lambda * sq);
  }
  return acc.result();
}

MonteCarloEstimate dsm_loss_reparam(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                                    const LossPlan& plan) {
  PlanSampler sampler(spec, target, plan);
  Accumulator acc;
  PlanDraw d;
  std::vector<double> sv(spec.dim);
  for (std::size_t i = 0; i < sampler.n(); ++i) {
    sampler.draw(i, d);
    s.eval(d.t, d.x, sv, loss_key(i));
    double sq = 0.0;
    for (std::size_t j = 0; j < sv.size(); ++j) {
      const double r = d.s * sv[j] + d.z[j];
      sq += r * r;
    }
    acc.add(sq);
  }
  return acc.result();
}

MonteCarloEstimate ssm_loss(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                            const LossPlan& plan, std::size_t n_projections, const DirectionalDerivative& directional) {
  if (n_projections == 0) throw UsageError("sliced score matching needs at least one projection");
  PlanSampler sampler(spec, target, plan);
  Accumulator acc;
  PlanDraw d;
  const std::size_t dim = spec.dim;
  std::vector<double> sv(dim), v(dim), xp(dim), xm(dim), sp(dim), sm(dim);
  for (std::size_t i = 0; i < sampler.n(); ++i) {
    auto g = sampler.draw(i, d);
    s.eval(d.t, d.x, sv, loss_key(i));
    double proj = 0.0;
    for (std::size_t p = 0; p < n_projections; ++p) {
      fill_standard_normal(g, v);
      if (directional) {
        proj += directional(d.t, d.x, v);
      } else {
        double scale = 1.0;
        for (double xv : d.x) scale = std::max(scale, std::abs(xv));
        const double h = 1e-5 * scale;
        for (std::size_t j = 0; j < dim; ++j) {
          xp[j] = d.x[j] + h * v[j];
          xm[j] = d.x[j] - h * v[j];
        }
        s.eval(d.t, xp, sp, loss_key(i, 1 + 2 * p));
        s.eval(d.t, xm, sm, loss_key(i, 2 + 2 * p));
        double dd = 0.0;
        for (std::size_t j = 0; j < dim; ++j) dd += v[j] * (sp[j] - sm[j]);
        proj += dd / (2.0 * h);
      }
    }
    acc.add(d.lambda * (sq_norm(sv) + 2.0 * proj / static_cast<double>(n_projections)));
  }
  return acc.result();
}

// ---------------------------------------------------------------------------
// Lipschitz constant

LipschitzEstimate score_lipschitz(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                                  std::size_t draws, std::uint64_t seed) {
  spec.validate();
  target.validate();
  const PerturbationKernel k = kernel(spec, t);
  if (target.size() == 1) {
    const double V = k.mean_factor * k.mean_factor * target.vars[0] + k.cond_var();
    if (!(V > 0.0)) throw DomainError("score Lipschitz constant is unbounded for a point mass at t = 0");
    return {1.0 / V, true};
  }
  if (draws == 0) throw UsageError("score_lipschitz needs at least one draw");
  const std::size_t d = target.dim();
  std::vector<double> x0(d), x(d);
  Accumulator acc;
  double sup = 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  for (std::size_t i = 0; i < draws; ++i) {
    target.sample_one(seed, i, x0);
    auto g = make_stream({seed, role(StreamRole::Kernel), i});
    for (std::size_t j = 0; j < d; ++j) x[j] = kernel_mean(spec, k.mean_factor, x0[j], j) + k.cond_std * standard_normal(g);
    const auto J = exact_score_jacobian(spec, target, t, x);
    Eigen::Map<const Eigen::MatrixXd> Jm(J.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    solver.compute(Jm, Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues();
    const double norm = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
    sup = std::max(sup, norm);
    acc.add(norm);
  }
  const MonteCarloEstimate e = acc.result();
  const double sd = e.std_error * std::sqrt(static_cast<double>(draws));
  return {sup + 3.0 * sd, false};
}

}  // namespace cdpm
