#pragma once

// Wasserstein-2 estimators between equal-size point clouds with uniform weights.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cdpm/samples.hpp"

namespace cdpm {

enum class W2Method { Sorted1D, Assignment, Sinkhorn, GaussianClosedForm };
std::string_view to_string(W2Method m);
W2Method parse_w2_method(std::string_view name);

struct W2Report {
  double value = 0.0;
  W2Method method = W2Method::Sorted1D;
  std::size_t n = 0;
  std::optional<double> std_error;  // bootstrap
  bool converged = true;            // Sinkhorn only
  std::size_t iterations = 0;       // Sinkhorn only
  std::vector<double> trace;        // Sinkhorn dual objective after each iteration at the target reg
};

inline constexpr std::size_t kAssignmentCap = 4096;

W2Report w2_sorted_1d(const Samples& a, const Samples& b);
// Exact minimum-cost perfect matching (Hungarian / shortest augmenting path).
W2Report w2_assignment(const Samples& a, const Samples& b);

struct SinkhornOptions {
  double reg = 1e-2;          // entropic regularisation, absolute (cost units)
  std::size_t max_iters = 5000;
  double tol = 1e-8;          // L1 violation of the row marginal
  bool debiased = false;      // Sinkhorn divergence S(a,b) - (S(a,a) + S(b,b)) / 2
  bool eps_scaling = true;    // warm start from a geometric sequence of larger reg values
};

// Non-debiased value: sqrt of the transport cost <P, C> of the entropic plan.
// Debiased value: sqrt(max(0, divergence)) built from entropic dual objectives.
W2Report w2_sinkhorn(const Samples& a, const Samples& b, const SinkhornOptions& opt = {});

// Isotropic Gaussians N(m1, v1 I) and N(m2, v2 I).
double w2_gaussian(std::span<const double> m1, double v1, std::span<const double> m2, double v2);

using W2Estimator = std::function<W2Report(const Samples&, const Samples&)>;
// Resamples both clouds with replacement `reps` times and returns the standard deviation.
double bootstrap_std_error(const Samples& a, const Samples& b, const W2Estimator& est, std::size_t reps,
                           std::uint64_t seed);

// Sorted1D for d = 1, Assignment up to the cap, Sinkhorn above it (labelled in the report).
W2Report w2_auto(const Samples& a, const Samples& b, const SinkhornOptions& fallback = {});

}  // namespace cdpm
