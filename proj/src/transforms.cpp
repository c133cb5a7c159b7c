#include "cdpm/transforms.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "cdpm/errors.hpp"

namespace cdpm {

TransformMap::TransformMap(DiffusionSpec ve, DiffusionSpec c) : ve_spec(std::move(ve)), c_spec(std::move(c)) {
  if (ve_spec.kind != Family::VE) throw ConfigError("transform map needs a VE spec on the source clock");
  if (c_spec.kind != Family::CSubVP) throw ConfigError("transform map needs a CSubVP spec on the target clock");
  ve_spec.validate();
  c_spec.validate();
  if (ve_spec.dim != c_spec.dim) throw ConfigError("transform map specs disagree on dimension");
}

double TransformMap::f(double t) const {
  check_time(c_spec, t);
  return std::exp(0.5 * beta_integral(c_spec, t));
}

double TransformMap::g(double t) const {
  check_time(c_spec, t);
  // 2 sinh(B/2), accurate near t = 0.
  return 2.0 * std::sinh(0.5 * beta_integral(c_spec, t));
}

double TransformMap::tau(double t) const {
  const double gt = g(t);
  const double ratio = gt / ve_spec.sigma_min;
  const double value = 0.5 * ve_spec.T * std::log1p(ratio * ratio) / std::log(ve_spec.sigma_max / ve_spec.sigma_min);
  if (value > ve_spec.T * (1.0 + 1e-12)) {
    const double gap = ve_spec.sigma_max * ve_spec.sigma_max - ve_spec.sigma_min * ve_spec.sigma_min;
    std::ostringstream os;
    os << "tau(" << t << ") leaves the VE horizon: g^2 = " << gt * gt << " exceeds sigma_max^2 - sigma_min^2 = "
       << gap;
    throw ConfigError(os.str());
  }
  return value;
}

double TransformMap::identity_residual(double t) const {
  const double tt = tau(t);
  const double lr = std::log(ve_spec.sigma_max / ve_spec.sigma_min);
  const double lhs = ve_spec.sigma_min * ve_spec.sigma_min * std::expm1(2.0 * tt / ve_spec.T * lr);
  const double gt = g(t);
  const double rhs = gt * gt;
  if (rhs == 0.0) return std::abs(lhs);
  return std::abs(lhs / rhs - 1.0);
}

PreconditionReport check_precondition(const TransformMap& map) {
  PreconditionReport r;
  const auto& c = map.c_spec;
  const auto& ve = map.ve_spec;
  const double gT = map.g(c.T);
  r.g_T_sq = gT * gT;
  r.ve_gap = ve.sigma_max * ve.sigma_max - ve.sigma_min * ve.sigma_min;
  r.ok = r.ve_gap > r.g_T_sq;
  // beta(t) is linear on [0, T] with fixed endpoints, so B(T) = T (beta_min + beta_max) / 2.
  r.max_T = 4.0 * std::asinh(0.5 * std::sqrt(r.ve_gap)) / (c.beta_min + c.beta_max);
  return r;
}

ScoreField transport_score(const TransformMap& map, const ScoreField& s_ve, TransportRule rule) {
  const std::size_t d = map.c_spec.dim;
  if (s_ve.dim() != d) throw ConfigError("VE score dimension does not match the transform map");
  const bool chain = rule == TransportRule::ChainRule;

  auto eval = [map, s_ve, chain, d](double t, std::span<const double> x, std::span<double> out, const EvalKey& key) {
    const double ft = map.f(t);
    const double tt = map.tau(t);
    std::vector<double> y(d);
    for (std::size_t j = 0; j < d; ++j) y[j] = x[j] / ft;
    s_ve.eval(tt, y, out, key);
    if (chain)
      for (std::size_t j = 0; j < d; ++j) out[j] /= ft;
  };

  ScoreField::ScalarFn logp;
  if (s_ve.has_log_density()) {
    logp = [map, s_ve, d](double t, std::span<const double> x) {
      const double ft = map.f(t);
      std::vector<double> y(d);
      for (std::size_t j = 0; j < d; ++j) y[j] = x[j] / ft;
      return -static_cast<double>(d) * std::log(ft) + s_ve.log_density(map.tau(t), y);
    };
  }
  ScoreField::ScalarFn div;
  if (s_ve.has_divergence()) {
    div = [map, s_ve, chain, d](double t, std::span<const double> x) {
      const double ft = map.f(t);
      std::vector<double> y(d);
      for (std::size_t j = 0; j < d; ++j) y[j] = x[j] / ft;
      const double base = s_ve.divergence(map.tau(t), y);
      return chain ? base / (ft * ft) : base / ft;
    };
  }
  return ScoreField(d, std::move(eval), std::move(logp), std::move(div));
}

}  // namespace cdpm
