#pragma once

// Linear-drift diffusion families and their closed-form perturbation kernels.
//
// Every family has drift b(t) * (x - mu) with a scalar factor b(t) and an
// isotropic diffusion sigma(t). The beta schedule is linear on [0, T]:
//   beta(t) = beta_min + (t / T) (beta_max - beta_min),
//   B(t)    = int_0^t beta = beta_min t + t^2 (beta_max - beta_min) / (2T).

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdpm {

enum class Family { OU, VE, VP, SubVP, COU, CVP, CSubVP };

inline constexpr Family kAllFamilies[] = {Family::OU,  Family::VE,  Family::VP,    Family::SubVP,
                                          Family::COU, Family::CVP, Family::CSubVP};

std::string_view to_string(Family f);
// Case-insensitive; accepts "subvp"/"sub-vp", "csubvp", ...
Family parse_family(std::string_view name);

struct DiffusionSpec {
  Family kind = Family::OU;
  double theta = 0.2;  // OU, COU
  double sigma = 0.5;  // OU, COU
  std::vector<double> mu;  // OU, COU drift centre; empty means the zero vector
  double sigma_min = 0.05;  // VE
  double sigma_max = 0.5;   // VE
  double beta_min = 0.02;   // VP-type families
  double beta_max = 0.2;
  double T = 10.0;
  std::size_t dim = 1;

  // Defaults pinned to the one-dimensional parameter table (theta=0.2, sigma=0.5,
  // beta in [0.02, 0.2], sigma in [0.05, 0.5], T=10).
  static DiffusionSpec defaults(Family kind, std::size_t dim = 1);

  // Throws ConfigError on non-positive rates, inverted ranges, T <= 0, dim == 0
  // or a mu vector of the wrong length.
  void validate() const;

  double mu_at(std::size_t i) const { return mu.empty() ? 0.0 : mu[i]; }
  bool is_beta_family() const;
};

struct PerturbationKernel {
  double mean_factor = 1.0;  // f(t)
  double cond_std = 0.0;     // s(t)
  double cond_var() const { return cond_std * cond_std; }
};

struct PriorSpec {
  std::vector<double> mean;
  double variance = 1.0;
};

struct ContractionProfile {
  std::function<double(double)> r_b;
  double min_r_b = 0.0;
  bool is_cdpm = false;
  // inf_t (r_b - (L + h) sigma^2), filled when L and h are supplied.
  std::optional<double> alpha;
  // inf_t (r_b - L_s sigma^2), filled when L_s is supplied.
  std::optional<double> beta;
};

double beta_schedule(const DiffusionSpec& spec, double t);
double beta_integral(const DiffusionSpec& spec, double t);

double drift_factor(const DiffusionSpec& spec, double t);
double diffusion_coeff(const DiffusionSpec& spec, double t);
// sigma(t)^2 without the round trip through sqrt.
double diffusion_sq(const DiffusionSpec& spec, double t);

PerturbationKernel kernel(const DiffusionSpec& spec, double t);

// Throws ConfigError when the prior variance exceeds kMaxPriorVariance.
PriorSpec prior(const DiffusionSpec& spec);
inline constexpr double kMaxPriorVariance = 1e12;

struct ContractionQuery {
  std::optional<double> L;
  double h = 0.0;
  std::optional<double> L_s;
  std::size_t grid = 2001;
};

ContractionProfile contraction_profile(const DiffusionSpec& spec, const ContractionQuery& q = {});

// Throws DomainError unless 0 <= t <= T (with a relative slack of 1e-12).
void check_time(const DiffusionSpec& spec, double t);

}  // namespace cdpm
