#pragma once

// Exact scores of Gaussian-mixture targets pushed through a perturbation
// kernel, noise-injected score wrappers, an affine parametric score family and
// Monte-Carlo estimators of the explicit / implicit / denoising / sliced
// score-matching objectives.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cdpm/samples.hpp"
#include "cdpm/sde_models.hpp"

namespace cdpm {

// Isotropic Gaussian mixture; a zero component variance is a point mass.
struct MixtureTarget {
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<double> vars;

  static MixtureTarget point_mass(std::vector<double> x0);
  static MixtureTarget gaussian(std::vector<double> mean, double var);
  // Equal-weight, zero-variance components at each row.
  static MixtureTarget empirical(const Samples& points);

  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
  std::size_t size() const { return weights.size(); }
  bool has_point_mass() const;
  void validate() const;

  // Draws n points; component choice and the Gaussian offset come from the
  // (seed, index) stream so any sub-range can be regenerated independently.
  Samples sample(std::size_t n, std::uint64_t seed) const;
  void sample_one(std::uint64_t seed, std::uint64_t index, std::span<double> out) const;

  // E|x|^2 under the target.
  double second_moment() const;
};

// Identifies one score evaluation inside a sampler so that noise wrappers can
// draw reproducible, order-independent perturbations.
struct EvalKey {
  std::uint64_t path = 0;
  std::uint64_t step = 0;
  std::uint64_t role = 0;
};

class ScoreField {
 public:
  using Evaluator = std::function<void(double t, std::span<const double> x, std::span<double> out, const EvalKey& key)>;
  using ScalarFn = std::function<double(double t, std::span<const double> x)>;

  ScoreField() = default;
  ScoreField(std::size_t dim, Evaluator eval, ScalarFn log_density = {}, ScalarFn divergence = {});

  std::size_t dim() const { return dim_; }
  bool has_log_density() const { return static_cast<bool>(log_density_); }
  bool has_divergence() const { return static_cast<bool>(divergence_); }

  void eval(double t, std::span<const double> x, std::span<double> out, const EvalKey& key) const {
    eval_(t, x, out, key);
  }
  // Unkeyed call: uses an internal call counter as the evaluation key.
  std::vector<double> operator()(double t, std::span<const double> x) const;

  double log_density(double t, std::span<const double> x) const;
  double divergence(double t, std::span<const double> x) const;

 private:
  std::size_t dim_ = 0;
  Evaluator eval_;
  ScalarFn log_density_;
  ScalarFn divergence_;
  std::shared_ptr<std::atomic<std::uint64_t>> calls_;
};

// ---------------------------------------------------------------------------
// Exact marginals of a mixture target

double marginal_logdensity(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                           std::span<const double> x);
std::vector<double> exact_score(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                                std::span<const double> x);
// d x d Jacobian of the exact score, row-major.
std::vector<double> exact_score_jacobian(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                                         std::span<const double> x);

// Exact score with log-density and divergence attached.
ScoreField exact_score_field(const DiffusionSpec& spec, const MixtureTarget& target);

// ---------------------------------------------------------------------------
// Noise injection

enum class NoiseMode { PerEvalGaussian, FrozenOffset };

struct NoiseModel {
  NoiseMode mode = NoiseMode::PerEvalGaussian;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

NoiseMode parse_noise_mode(std::string_view name);

// PerEvalGaussian adds epsilon * z, z ~ N(0, I) keyed by (seed, path, step, role);
// FrozenOffset adds epsilon * u with a unit vector u fixed at construction.
// epsilon == 0 returns the base field unchanged.
ScoreField noisy_score(const ScoreField& base, const NoiseModel& model);

// ---------------------------------------------------------------------------
// Affine family s(t, x) = A(t) x + c(t), piecewise linear in t.

struct AffineScoreFamily {
  std::vector<double> time_grid;
  std::vector<double> A;
  std::vector<std::vector<double>> c;

  static AffineScoreFamily constant(const std::vector<double>& grid, double a, std::vector<double> offset);

  std::size_t dim() const { return c.empty() ? 0 : c.front().size(); }
  std::size_t parameter_count() const { return A.size() * (1 + dim()); }
  // Flat parameter layout: A[0..m), then c[0][0..d), c[1][0..d), ...
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);

  double slope(double t) const;
  void offset(double t, std::span<double> out) const;
  void validate() const;

  ScoreField field() const;
};

// ---------------------------------------------------------------------------
// Score-matching objectives

enum class Weighting { Unit, KernelVariance };

struct LossPlan {
  Weighting weighting = Weighting::Unit;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  // Times are drawn uniformly from [t_eps_fraction * T, T].
  double t_eps_fraction = 1e-3;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

MonteCarloEstimate esm_loss(const ScoreField& s, const ScoreField& oracle, const DiffusionSpec& spec,
                            const MixtureTarget& target, const LossPlan& plan);
MonteCarloEstimate ism_loss(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                            const LossPlan& plan);
MonteCarloEstimate dsm_loss(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                            const LossPlan& plan);
// Reparameterised form E|s_t s_theta(t, f x0 + s_t e) + e|^2 of the
// lambda = s(t)^2 denoising objective.
MonteCarloEstimate dsm_loss_reparam(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                                    const LossPlan& plan);
// Directional derivative v^T grad(v^T s) is taken from `directional` when
// provided (exact for the affine family), else by central differences.
using DirectionalDerivative = std::function<double(double t, std::span<const double> x, std::span<const double> v)>;
MonteCarloEstimate ssm_loss(const ScoreField& s, const DiffusionSpec& spec, const MixtureTarget& target,
                            const LossPlan& plan, std::size_t n_projections,
                            const DirectionalDerivative& directional = {});
DirectionalDerivative affine_directional(const AffineScoreFamily& fam);

// ---------------------------------------------------------------------------
// Lipschitz constant of the exact score in x at time t.

struct LipschitzEstimate {
  double value = 0.0;
  bool exact = false;
};

LipschitzEstimate score_lipschitz(const DiffusionSpec& spec, const MixtureTarget& target, double t,
                                  std::size_t draws = 10000, std::uint64_t seed = 0);

}  // namespace cdpm
