#pragma once

// Orchestration of the desk-scale studies. Every runner returns pass/fail
// lines and, when the context asks for it, writes CSV artifacts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdpm/datasets.hpp"
#include "cdpm/reverse_sampler.hpp"
#include "cdpm/score_oracle.hpp"
#include "cdpm/sde_models.hpp"
#include "cdpm/wasserstein.hpp"

namespace cdpm {

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
  bool informational = false;  // reported but never fails a run
};

bool all_pass(const std::vector<CheckLine>& lines);
std::string format_check(const CheckLine& c);

struct RunContext {
  std::filesystem::path out_dir;  // empty: no files written
  std::string command;
  std::string config_hash = "0000000000000000";
  std::size_t threads = 1;
  std::size_t save_every = 0;
};

// Writes <out>/<stem>_summary.csv with one row per check.
void write_summary(const RunContext& ctx, const std::string& stem, const std::vector<CheckLine>& lines,
                   const std::vector<std::uint64_t>& seeds);

// Trajectory export with columns path,step,t,x0..x{d-1}.
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& batch, const RunContext& ctx);

// Derives an independent sub-seed from a replicate seed and a tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};
MeanSe mean_se(const std::vector<double>& v);

// One-sided paired t-test of H1: mean(a - b) < 0. Returns the p-value.
double paired_t_pvalue_less(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------

struct KernelCheckParams {
  std::vector<DiffusionSpec> specs;  // default: all seven families with default parameters
  std::size_t n_paths = 100000;
  double dt = 1e-3;
  double x0 = -1.0;
  std::vector<double> fractions{0.25, 0.5, 1.0};
  std::uint64_t seed = 0;
  double z_tol = 3.0;

  static KernelCheckParams defaults();
};
std::vector<CheckLine> run_kernel_check(const KernelCheckParams& p, const RunContext& ctx);

struct CompareCell {
  Family family = Family::OU;
  double epsilon = 0.0;
  double dt = 0.0;
  std::size_t n_steps = 0;
  MeanSe w2;
  std::size_t diverged = 0;
};

struct CompareParams {
  std::vector<DiffusionSpec> specs;  // default: OU and COU
  std::vector<double> epsilons{0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  std::vector<double> dts{0.02, 0.05};
  std::vector<std::uint64_t> seeds;  // default: 0..19
  std::size_t n_paths = 2000;
  double x0 = -1.0;
  double t_eps_fraction = 1e-3;
  NoiseMode mode = NoiseMode::PerEvalGaussian;
  bool check_anchors = true;

  static CompareParams defaults();
};

struct CompareResult {
  std::vector<CompareCell> cells;
  std::vector<CheckLine> checks;
};
CompareResult run_compare(const CompareParams& p, const RunContext& ctx);

struct SwissrollParams {
  std::vector<DiffusionSpec> specs;  // default: subVP, CSubVP (beta 0.01..8, T = 1), OU, COU (defaults)
  DatasetSpec data;                  // training set; seed is replaced per replicate
  std::size_t n_eval = 1000;         // generated paths and held-out points
  std::vector<std::uint64_t> seeds;  // default: 0..9
  double epsilon = 0.1;
  NoiseMode mode = NoiseMode::PerEvalGaussian;
  SamplerConfig sampler;             // default: PC, snr 0.2, 300 steps
  double t_eps_fraction = 1e-3;
  double alpha = 0.05;

  static SwissrollParams defaults();
};

struct SwissrollRow {
  Family family = Family::OU;
  std::uint64_t seed = 0;
  double w2 = 0.0;
  bool diverged = false;
};

struct SwissrollResult {
  std::vector<SwissrollRow> rows;
  std::vector<CheckLine> checks;
  std::size_t snapshots_written = 0;
};
SwissrollResult run_swissroll(const SwissrollParams& p, const RunContext& ctx);

struct ContractionParams {
  std::vector<DiffusionSpec> specs;  // default: COU, CVP, CSubVP, OU, VP
  double target_mean = 0.0;
  double target_var = 100.0;
  std::size_t n_paths = 1000;
  std::size_t n_steps = 1000;
  double t_eps_fraction = 1e-3;
  double early_window = 0.25;  // fraction of the backward horizon for non-contractive families
  std::uint64_t seed = 0;

  static ContractionParams defaults();
};
std::vector<CheckLine> run_contraction(const ContractionParams& p, const RunContext& ctx);

struct OrderParams {
  DiffusionSpec spec;  // default: COU
  double x0 = -1.0;
  std::vector<std::size_t> step_counts{200, 400, 800, 1600};
  std::size_t reference_factor = 8;
  std::size_t n_paths = 2000;
  std::vector<std::uint64_t> seeds;  // default: 0..19
  double t_eps_fraction = 1e-3;
  double slope_lo = 0.45;
  double slope_hi = 1.1;

  static OrderParams defaults();
};
std::vector<CheckLine> run_order(const OrderParams& p, const RunContext& ctx);

struct BoundsParams {
  DiffusionSpec cou;  // Theorem-style bound family (any contractive linear family)
  DiffusionSpec cvp;
  double kappa = 1.0;
  std::vector<double> epsilons{0.0, 0.1, 0.5};
  std::vector<std::uint64_t> seeds;  // default: 0..19
  std::size_t n_paths = 2000;
  std::size_t n_steps = 1000;
  double t_eps_fraction = 1e-3;
  std::size_t u_grid = 101;
  double slack_se = 2.0;
  NoiseMode mode = NoiseMode::PerEvalGaussian;
  std::optional<double> eta;       // overrides the closed-form initialisation error
  std::optional<double> L;         // overrides the exact Lipschitz constant
  std::optional<double> h;         // fixes h instead of minimising over a grid
  std::optional<double> second_moment;  // overrides E|x|^2 = dim / kappa in the CVP bound
  bool empirical = true;           // false: evaluate the bounds only

  static BoundsParams defaults();
};
std::vector<CheckLine> run_bounds(const BoundsParams& p, const RunContext& ctx);

struct TransformParams {
  DiffusionSpec ve;
  DiffusionSpec c;
  double target_mean = 0.3;
  double target_var = 0.5;
  std::size_t nt = 1000;
  std::size_t nx = 100;
  double x_lo = -3.0;
  double x_hi = 3.0;
  double tol = 1e-9;
  double tau_tol = 1e-10;

  static TransformParams defaults();
};
std::vector<CheckLine> run_transform_check(const TransformParams& p, const RunContext& ctx);

struct W2OracleParams {
  std::size_t instances = 50;
  std::size_t max_n = 6;
  std::size_t sorted_n = 300;
  std::size_t gaussian_n = 10000;
  std::size_t bootstrap = 200;
  std::uint64_t seed = 0;
};
std::vector<CheckLine> run_w2_oracle(const W2OracleParams& p, const RunContext& ctx);

struct SinkhornCheckParams {
  std::size_t n = 256;
  double reg_scale = 1e-3;  // reg = reg_scale * mean pairwise cost
  double rel_tol = 0.02;
  std::uint64_t seed = 0;
};
std::vector<CheckLine> run_sinkhorn_check(const SinkhornCheckParams& p, const RunContext& ctx);

struct ScoreMatchingParams {
  DiffusionSpec spec;
  double target_mean = 0.5;
  double target_var = 0.8;
  std::size_t n = 1000000;
  std::uint64_t seed = 0;
  double slope0 = -0.3;   // parameters away from the optimum
  double offset0 = 0.2;
  double fd_step = 1e-4;
  double rel_tol = 0.01;

  static ScoreMatchingParams defaults();
};
std::vector<CheckLine> run_score_matching(const ScoreMatchingParams& p, const RunContext& ctx);

}  // namespace cdpm
