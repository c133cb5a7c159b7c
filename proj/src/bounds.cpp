#include "cdpm/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cdpm/errors.hpp"

namespace cdpm {

namespace {

constexpr double kExpLimit = 700.0;

template <class F>
double integrate(F&& f, double a, double b) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13, &err);
}

// Antiderivative pieces of sigma^2 for the table families.
double sigma_sq_integral_closed(const DiffusionSpec& s, double a, double b) {
  switch (s.kind) {
    case Family::OU:
    case Family::COU: return s.sigma * s.sigma * (b - a);
    case Family::VE: return kernel(s, b).cond_var() - kernel(s, a).cond_var();
    case Family::VP:
    case Family::CVP: return beta_integral(s, b) - beta_integral(s, a);
    case Family::SubVP: {
      const double Ba = beta_integral(s, a), Bb = beta_integral(s, b);
      return (Bb - Ba) + 0.5 * (std::exp(-2.0 * Bb) - std::exp(-2.0 * Ba));
    }
    case Family::CSubVP: {
      const double Ba = beta_integral(s, a), Bb = beta_integral(s, b);
      return 0.5 * (std::exp(2.0 * Bb) - std::exp(2.0 * Ba)) - (Bb - Ba);
    }
  }
  return 0.0;
}

double r_b_integral_closed(const DiffusionSpec& s, double a, double b) {
  switch (s.kind) {
    case Family::OU: return -s.theta * (b - a);
    case Family::COU: return s.theta * (b - a);
    case Family::VE: return 0.0;
    case Family::VP:
    case Family::SubVP: return -0.5 * (beta_integral(s, b) - beta_integral(s, a));
    case Family::CVP:
    case Family::CSubVP: return 0.5 * (beta_integral(s, b) - beta_integral(s, a));
  }
  return 0.0;
}

// int_0^t of the u-integrand, i.e. u(T) - u(T - t).
double u_head(const BoundInputs& in, double t) {
  return -2.0 * integral_r_b(in, 0.0, t) + (2.0 * in.L + 2.0 * in.h) * integral_sigma_sq(in, 0.0, t);
}

}  // namespace

BoundInputs BoundInputs::from_spec(const DiffusionSpec& spec) {
  spec.validate();
  BoundInputs in;
  in.spec = spec;
  in.T = spec.T;
  in.r_b = [spec](double t) { return drift_factor(spec, t); };
  in.sigma_sq = [spec](double t) { return diffusion_sq(spec, t); };
  return in;
}

void BoundInputs::validate() const {
  if (!r_b || !sigma_sq) throw ConfigError("bound inputs need r_b and sigma^2 functions");
  if (!(T > 0.0)) throw ConfigError("bound inputs need T > 0");
  if (!(h >= 0.0)) throw ConfigError("bound inputs need h >= 0");
  for (double v : {L, L_s, L_sigma, R_sigma, L_b, R_s, epsilon, eta, kappa, second_moment})
    if (!(v >= 0.0)) throw ConfigError("bound constants must be nonnegative");
}

double integral_r_b(const BoundInputs& in, double a, double b) {
  if (in.spec) return r_b_integral_closed(*in.spec, a, b);
  return integrate(in.r_b, a, b);
}

double integral_sigma_sq(const BoundInputs& in, double a, double b) {
  if (in.spec) return sigma_sq_integral_closed(*in.spec, a, b);
  return integrate(in.sigma_sq, a, b);
}

double u_of_t(const BoundInputs& in, double t) {
  in.validate();
  if (!(t >= 0.0 && t <= in.T * (1.0 + 1e-12))) throw DomainError("u(t) needs 0 <= t <= T");
  const double a = std::max(0.0, in.T - t);
  return -2.0 * integral_r_b(in, a, in.T) + (2.0 * in.L + 2.0 * in.h) * integral_sigma_sq(in, a, in.T);
}

double u_of_t_quadrature(const BoundInputs& in, double t) {
  in.validate();
  if (!(t >= 0.0 && t <= in.T * (1.0 + 1e-12))) throw DomainError("u(t) needs 0 <= t <= T");
  const double c = 2.0 * in.L + 2.0 * in.h;
  return integrate([&](double s) { return -2.0 * in.r_b(s) + c * in.sigma_sq(s); }, std::max(0.0, in.T - t), in.T);
}

BoundValue sampling_error_bound(const BoundInputs& in) {
  in.validate();
  BoundValue out;
  out.h = in.h;
  out.u_T = u_of_t(in, in.T);
  if (out.u_T > kExpLimit) {
    out.overflow = true;
    out.value = std::numeric_limits<double>::infinity();
    std::ostringstream os;
    os << "e^{u(T)} overflows: u(T) = " << out.u_T << " (non-contractive configuration at this horizon)";
    out.diagnostics = os.str();
    return out;
  }
  double total = in.eta * in.eta * std::exp(out.u_T);
  if (in.epsilon > 0.0) {
    if (!(in.h > 0.0)) throw ConfigError("a nonzero score error needs h > 0");
    const double I = integrate([&](double t) { return in.sigma_sq(t) * std::exp(u_head(in, t)); }, 0.0, in.T);
    total += in.epsilon * in.epsilon / (2.0 * in.h) * I;
  }
  out.value = std::sqrt(total);
  if (!std::isfinite(out.value)) {
    out.overflow = true;
    out.value = std::numeric_limits<double>::infinity();
    out.diagnostics = "score-error integral overflows";
  }
  return out;
}

BoundValue sampling_error_bound_best_h(const BoundInputs& in, double h_lo, double h_hi, std::size_t points) {
  if (!(h_lo > 0.0 && h_hi > h_lo) || points < 2) throw ConfigError("h grid needs 0 < h_lo < h_hi and 2+ points");
  BoundValue best;
  best.value = std::numeric_limits<double>::infinity();
  bool have = false;
  const double step = std::log(h_hi / h_lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    BoundInputs trial = in;
    trial.h = h_lo * std::exp(step * static_cast<double>(i));
    const BoundValue v = sampling_error_bound(trial);
    if (!have || v.value < best.value) {
      best = v;
      have = true;
    }
  }
  return best;
}

double cvp_h_cap(const BoundInputs& in) {
  if (!in.spec || in.spec->kind != Family::CVP) throw ConfigError("CVP bound needs a CVP spec");
  return std::min(0.5, in.kappa / ((1.0 + in.kappa) * in.spec->beta_max * in.spec->T));
}

double cvp_default_h(const BoundInputs& in) {
  if (!in.spec || in.spec->kind != Family::CVP) throw ConfigError("CVP bound needs a CVP spec");
  return in.kappa / ((1.0 + in.kappa) * 2.0 * in.spec->beta_max * in.spec->T);
}

BoundValue cvp_bound(const BoundInputs& in) {
  in.validate();
  if (!(in.kappa > 0.0)) throw ConfigError("CVP bound needs kappa > 0");
  const double cap = cvp_h_cap(in);
  if (!(in.h > 0.0 && in.h < cap)) {
    std::ostringstream os;
    os << "CVP bound needs 0 < h < min(1/2, kappa/((1+kappa) beta_max T)) = " << cap << ", got h = " << in.h;
    throw DomainError(os.str());
  }
  const DiffusionSpec& s = *in.spec;
  BoundValue out;
  out.h = in.h;
  const double k = in.kappa;
  const double expo = 2.0 * s.beta_max * in.h * s.T - 2.0 * k / (k + 1.0) * (1.0 - std::exp(-s.beta_min * s.T));
  out.u_T = expo - beta_integral(s, s.T);
  out.value = in.second_moment * std::exp(expo) + in.epsilon * in.epsilon / (2.0 * in.h * (1.0 - 2.0 * in.h));
  return out;
}

double u_cvp(const BoundInputs& in, double t) {
  in.validate();
  if (!in.spec || in.spec->kind != Family::CVP) throw ConfigError("u_CVP needs a CVP spec");
  const DiffusionSpec& s = *in.spec;
  if (!(t >= 0.0 && t <= s.T * (1.0 + 1e-12))) throw DomainError("u_CVP(t) needs 0 <= t <= T");
  const double k = in.kappa;
  // The concavity denominator integrates to e^{B(s)}(1 + k) - k.
  auto integrand = [&](double r) {
    const double denom = std::exp(beta_integral(s, r)) * (1.0 + k) - k;
    return beta_schedule(s, r) * (-1.0 + 2.0 * in.h - 2.0 * k / denom);
  };
  return integrate(integrand, std::max(0.0, s.T - t), s.T);
}

OrderFit discretization_order(std::vector<std::pair<double, double>> points) {
  if (points.size() < 3) throw UsageError("order fit needs at least 3 (delta, error) points");
  for (const auto& [d, e] : points)
    if (!(d > 0.0) || !(e > 0.0)) throw UsageError("order fit needs positive deltas and errors");
  std::sort(points.begin(), points.end(), [](auto& x, auto& y) { return x.first > y.first; });
  OrderFit fit;
  const double m = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [d, e] : points) {
    const double x = std::log(d), y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = m * sxx - sx * sx;
  if (den == 0.0) throw UsageError("order fit needs distinct deltas");
  fit.slope = (m * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / m;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double r = std::log(points[i].second) - (fit.intercept + fit.slope * std::log(points[i].first));
    fit.residuals.push_back(r);
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(r));
    if (i > 0) {
      if (points[i].second >= points[i - 1].second) fit.monotone = false;
      if (std::abs(points[i - 1].first / points[i].first - 2.0) > 1e-6) fit.halving = false;
    }
  }
  if (!fit.monotone) fit.warning += "errors do not decrease monotonically with delta; ";
  if (!fit.halving) fit.warning += "deltas are not successive halvings; ";
  return fit;
}

}  // namespace cdpm
