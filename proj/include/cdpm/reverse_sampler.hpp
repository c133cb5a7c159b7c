#pragma once

// Time-reversed diffusion and its Euler-Maruyama / predictor-corrector
// discretisations, plus the forward simulator and coupled-path contraction
// measurements.
//
// Backward time runs over [0, T - t_eps]; physical time is T - t. Noise is
// drawn from per-path streams keyed by (seed, path, role), so every path's
// randomness is independent of worker count and of the other paths.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "cdpm/samples.hpp"
#include "cdpm/score_oracle.hpp"
#include "cdpm/sde_models.hpp"

namespace cdpm {

struct ReverseProcess {
  DiffusionSpec spec;
  ScoreField score;
  // Either draw from a Gaussian prior or start from explicit points.
  std::variant<PriorSpec, Samples> init;
  double t_eps_fraction = 1e-3;

  double t_eps() const { return t_eps_fraction * spec.T; }
  double horizon() const { return spec.T - t_eps(); }
};

// Convenience: exact prior of the spec as the starting law.
ReverseProcess make_reverse_process(const DiffusionSpec& spec, ScoreField score, double t_eps_fraction = 1e-3);

enum class Method { EM, PC };
Method parse_method(std::string_view name);

// Corrector step size epsilon_c = 2 (snr |z| / |s|)^2 with the norms taken
// either per path or as the batch averages of per-path norms.
enum class CorrectorNorm { BatchMean, PerPath };

struct SamplerConfig {
  std::size_t n_steps = 1000;
  Method method = Method::EM;
  double snr = 0.0;
  std::size_t corrector_steps = 1;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Keep every K-th step (0: keep only the initial and final states).
  std::size_t save_every = 0;
  CorrectorNorm corrector_norm = CorrectorNorm::BatchMean;
  // false zeroes the Brownian increments (deterministic drift-only stepping).
  bool brownian = true;

  void validate() const;
};

struct TrajectoryBatch {
  std::vector<double> times;   // backward times of the saved states, increasing
  std::vector<std::size_t> steps;  // step index of each saved state (0 = initial)
  std::vector<Samples> states;
  std::uint64_t seed = 0;
  double t_cutoff = 0.0;  // physical time of the final state

  const Samples& final_state() const { return states.back(); }
};

// -b(T - t)(x - mu) + sigma^2(T - t) score(T - t, x)
std::vector<double> reverse_drift(const ReverseProcess& proc, double t, std::span<const double> x,
                                  const EvalKey& key = {});

TrajectoryBatch sample_em(const ReverseProcess& proc, const SamplerConfig& cfg);
TrajectoryBatch sample_pc(const ReverseProcess& proc, const SamplerConfig& cfg);
// Dispatches on cfg.method.
TrajectoryBatch sample(const ReverseProcess& proc, const SamplerConfig& cfg);

// Langevin corrector steps at a frozen physical time.
Samples langevin_correct(const ScoreField& score, double physical_t, Samples x, std::size_t steps, double snr,
                         std::uint64_t seed, CorrectorNorm rule = CorrectorNorm::BatchMean);

enum class ForwardMode { ExactKernel, EM };

// X_t for X_0 drawn from the target. EM integrates the forward SDE with step dt.
Samples sample_forward(const DiffusionSpec& spec, const MixtureTarget& target, double t, std::size_t n,
                       std::uint64_t seed, ForwardMode mode, double dt = 1e-3);

// Forward Euler-Maruyama from fixed start points, returning the state at each
// requested time (increasing, within [0, T]); times are reached on the grid
// k * dt to within rounding.
std::vector<Samples> simulate_forward_em(const DiffusionSpec& spec, const Samples& start, double dt,
                                         const std::vector<double>& checkpoints, std::uint64_t seed,
                                         std::size_t threads = 1);

// EM on several nested grids driven by one Brownian path per sample: the
// increments of the finest grid are summed to drive the coarser ones. Every
// count must divide the largest. Returns the final state for each count, in
// input order. Score evaluations are keyed {path, coarse step, 0}.
std::vector<Samples> sample_em_nested(const ReverseProcess& proc, const SamplerConfig& cfg,
                                      const std::vector<std::size_t>& step_counts);

struct DecayRecord {
  std::vector<double> times;  // backward times
  std::vector<double> rms;    // (E|X^x - X^y|^2)^{1/2}
  double rate = 0.0;          // least-squares slope of log rms vs time over the fit window
  double intercept = 0.0;
  bool fitted = false;
};

struct CouplingWindow {
  // Fraction of the backward horizon used for the fit, [begin, end].
  double begin = 0.0;
  double end = 1.0;
};

// Integrates two batches driven by identical noise streams.
DecayRecord coupled_contraction(const ReverseProcess& proc, const SamplerConfig& cfg, const Samples& init_x,
                                const Samples& init_y, CouplingWindow window = {});

// Least-squares slope/intercept of log(values) against times; zero or
// non-finite values are skipped. Returns nullopt with fewer than 2 usable points.
std::optional<std::pair<double, double>> fit_log_rate(std::span<const double> times, std::span<const double> values);

}  // namespace cdpm
