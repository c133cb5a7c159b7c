#pragma once

// Evaluators of the W2 sampling-error bounds and the discretisation-order fit.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdpm/sde_models.hpp"

namespace cdpm {

struct BoundInputs {
  // Forward-time coefficient functions. When `spec` is set they are derived
  // from it and integrals use closed forms.
  std::function<double(double)> r_b;
  std::function<double(double)> sigma_sq;
  std::optional<DiffusionSpec> spec;

  double L = 0.0;
  double L_s = 0.0;
  double L_sigma = 0.0;
  double R_sigma = 0.0;
  double L_b = 0.0;
  double R_s = 0.0;
  double epsilon = 0.0;
  double eta = 0.0;
  double h = 0.1;
  double kappa = 1.0;
  double T = 10.0;
  double second_moment = 0.0;

  static BoundInputs from_spec(const DiffusionSpec& spec);
  void validate() const;
};

// Closed form when inputs.spec is set, otherwise quadrature.
double integral_r_b(const BoundInputs& in, double a, double b);
double integral_sigma_sq(const BoundInputs& in, double a, double b);

// u(t) = int_{T-t}^{T} (-2 r_b(s) + (2L + 2h) sigma^2(s)) ds
double u_of_t(const BoundInputs& in, double t);
// Same integral by adaptive Gauss-Kronrod quadrature regardless of spec.
double u_of_t_quadrature(const BoundInputs& in, double t);

struct BoundValue {
  double value = 0.0;
  double u_T = 0.0;
  double h = 0.0;
  bool overflow = false;
  std::string diagnostics;
};

// sqrt(eta^2 e^{u(T)} + eps^2/(2h) int_0^T sigma^2(t) e^{u(T)-u(T-t)} dt)
BoundValue sampling_error_bound(const BoundInputs& in);
// Minimises the bound over h on a log grid in [h_lo, h_hi]; returns the best evaluation.
BoundValue sampling_error_bound_best_h(const BoundInputs& in, double h_lo = 1e-4, double h_hi = 1e2,
                                       std::size_t points = 241);

// Admissible range of h for the strongly log-concave CVP bound.
double cvp_h_cap(const BoundInputs& in);
double cvp_default_h(const BoundInputs& in);
// Bound on W2^2: E|x|^2 exp(2 beta_max h T - 2k/(k+1)(1 - e^{-beta_min T})) + eps^2/(2h(1-2h)).
BoundValue cvp_bound(const BoundInputs& in);
// The exact exponent u_CVP(t) with the strong-concavity rate of the perturbed data.
double u_cvp(const BoundInputs& in, double t);

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> residuals;
  double max_abs_residual = 0.0;
  bool monotone = true;  // errors decrease as delta decreases
  bool halving = true;   // consecutive deltas differ by a factor 2
  std::string warning;
};

// Least-squares slope of log(error) against log(delta).
OrderFit discretization_order(std::vector<std::pair<double, double>> points);

}  // namespace cdpm
