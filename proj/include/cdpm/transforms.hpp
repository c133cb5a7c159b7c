#pragma once

// Change of variables between the VE clock and the CSubVP process:
// X^C_t = f(t) X^VE_{tau(t)} with tau chosen so the VE variance equals g(t)^2.

#include <cstddef>

#include "cdpm/score_oracle.hpp"
#include "cdpm/sde_models.hpp"

namespace cdpm {

struct TransformMap {
  DiffusionSpec ve_spec;
  DiffusionSpec c_spec;

  // Validates the kinds; does not enforce the time-range precondition (see check_precondition).
  TransformMap(DiffusionSpec ve, DiffusionSpec c);

  double f(double t) const;  // e^{B(t)/2}
  double g(double t) const;  // f(t) - 1/f(t)
  // Closed form; throws ConfigError when tau(T) would leave the VE horizon.
  double tau(double t) const;
  // sigma_min^2((sigma_max/sigma_min)^{2 tau/T} - 1) / g^2 - 1, or the absolute gap when g = 0.
  double identity_residual(double t) const;
};

struct PreconditionReport {
  bool ok = false;
  double g_T_sq = 0.0;    // g(T)^2
  double ve_gap = 0.0;    // sigma_max^2 - sigma_min^2
  double max_T = 0.0;     // largest CSubVP horizon satisfying the inequality
};

PreconditionReport check_precondition(const TransformMap& map);

enum class TransportRule {
  ChainRule,  // (1/f) s_ve(tau, x/f)
  Literal,    // s_ve(tau, x/f), no 1/f factor
};

// Score on the CSubVP clock built from a VE-clock score. Log-density and
// divergence are carried over when the wrapped field provides them.
ScoreField transport_score(const TransformMap& map, const ScoreField& s_ve,
                           TransportRule rule = TransportRule::ChainRule);

}  // namespace cdpm
