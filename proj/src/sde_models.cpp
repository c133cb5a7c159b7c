#include "cdpm/sde_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "cdpm/errors.hpp"

namespace cdpm {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::OU: return "OU";
    case Family::VE: return "VE";
    case Family::VP: return "VP";
    case Family::SubVP: return "subVP";
    case Family::COU: return "COU";
    case Family::CVP: return "CVP";
    case Family::CSubVP: return "CSubVP";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_' || std::isspace(static_cast<unsigned char>(c))) continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "ou") return Family::OU;
  if (key == "ve") return Family::VE;
  if (key == "vp") return Family::VP;
  if (key == "subvp") return Family::SubVP;
  if (key == "cou") return Family::COU;
  if (key == "cvp") return Family::CVP;
  if (key == "csubvp") return Family::CSubVP;
  throw ConfigError("unknown SDE family '" + std::string(name) + "'");
}

DiffusionSpec DiffusionSpec::defaults(Family kind, std::size_t dim) {
  DiffusionSpec s;
  s.kind = kind;
  s.dim = dim;
  return s;
}

bool DiffusionSpec::is_beta_family() const {
  return kind == Family::VP || kind == Family::SubVP || kind == Family::CVP || kind == Family::CSubVP;
}

void DiffusionSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw ConfigError(std::string(to_string(kind)) + ": " + what);
  };
  if (!(T > 0.0) || !std::isfinite(T)) fail("horizon T must be positive and finite");
  if (dim == 0) fail("dimension must be positive");
  switch (kind) {
    case Family::OU:
    case Family::COU:
      if (!(theta > 0.0)) fail("theta must be positive");
      if (!(sigma > 0.0)) fail("sigma must be positive");
      if (!mu.empty() && mu.size() != dim) fail("mu must have length dim");
      break;
    case Family::VE:
      if (!(sigma_min > 0.0)) fail("sigma_min must be positive");
      if (!(sigma_min < sigma_max)) fail("sigma_min must be below sigma_max");
      break;
    default:
      if (!(beta_min > 0.0)) fail("beta_min must be positive");
      if (!(beta_min < beta_max)) fail("beta_min must be below beta_max");
      break;
  }
  if (kind != Family::OU && kind != Family::COU && !mu.empty()) {
    for (double m : mu)
      if (m != 0.0) fail("only OU/COU carry a non-zero drift centre");
  }
}

void check_time(const DiffusionSpec& spec, double t) {
  const double slack = 1e-12 * spec.T;
  if (!(t >= -slack && t <= spec.T + slack)) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << spec.T << "]";
    throw DomainError(os.str());
  }
}

double beta_schedule(const DiffusionSpec& spec, double t) {
  return spec.beta_min + (t / spec.T) * (spec.beta_max - spec.beta_min);
}

double beta_integral(const DiffusionSpec& spec, double t) {
  return spec.beta_min * t + t * t * (spec.beta_max - spec.beta_min) / (2.0 * spec.T);
}

double drift_factor(const DiffusionSpec& spec, double t) {
  check_time(spec, t);
  switch (spec.kind) {
    case Family::OU: return -spec.theta;
    case Family::COU: return spec.theta;
    case Family::VE: return 0.0;
    case Family::VP:
    case Family::SubVP: return -0.5 * beta_schedule(spec, t);
    case Family::CVP:
    case Family::CSubVP: return 0.5 * beta_schedule(spec, t);
  }
  return 0.0;
}

double diffusion_sq(const DiffusionSpec& spec, double t) {
  check_time(spec, t);
  switch (spec.kind) {
    case Family::OU:
    case Family::COU: return spec.sigma * spec.sigma;
    case Family::VE: {
      const double log_ratio = std::log(spec.sigma_max / spec.sigma_min);
      const double level = spec.sigma_min * std::exp(log_ratio * t / spec.T);
      return level * level * (2.0 / spec.T) * log_ratio;
    }
    case Family::VP:
    case Family::CVP: return beta_schedule(spec, t);
    case Family::SubVP:
      return beta_schedule(spec, t) * -std::expm1(-2.0 * beta_integral(spec, t));
    case Family::CSubVP:
      return beta_schedule(spec, t) * std::expm1(2.0 * beta_integral(spec, t));
  }
  return 0.0;
}

double diffusion_coeff(const DiffusionSpec& spec, double t) { return std::sqrt(diffusion_sq(spec, t)); }

PerturbationKernel kernel(const DiffusionSpec& spec, double t) {
  check_time(spec, t);
  t = std::clamp(t, 0.0, spec.T);
  PerturbationKernel k;
  switch (spec.kind) {
    case Family::OU: {
      k.mean_factor = std::exp(-spec.theta * t);
      k.cond_std = spec.sigma * std::sqrt(-std::expm1(-2.0 * spec.theta * t) / (2.0 * spec.theta));
      break;
    }
    case Family::COU: {
      k.mean_factor = std::exp(spec.theta * t);
      k.cond_std = spec.sigma * std::sqrt(std::expm1(2.0 * spec.theta * t) / (2.0 * spec.theta));
      break;
    }
    case Family::VE: {
      const double log_ratio = std::log(spec.sigma_max / spec.sigma_min);
      k.mean_factor = 1.0;
      k.cond_std = spec.sigma_min * std::sqrt(std::expm1(2.0 * t / spec.T * log_ratio));
      break;
    }
    case Family::VP: {
      const double B = beta_integral(spec, t);
      k.mean_factor = std::exp(-0.5 * B);
      k.cond_std = std::sqrt(-std::expm1(-B));
      break;
    }
    case Family::SubVP: {
      const double B = beta_integral(spec, t);
      k.mean_factor = std::exp(-0.5 * B);
      k.cond_std = -std::expm1(-B);
      break;
    }
    case Family::CVP: {
      const double B = beta_integral(spec, t);
      k.mean_factor = std::exp(0.5 * B);
      k.cond_std = std::sqrt(std::expm1(B));
      break;
    }
    case Family::CSubVP: {
      const double B = beta_integral(spec, t);
      k.mean_factor = std::exp(0.5 * B);
      k.cond_std = std::expm1(B);
      break;
    }
  }
  return k;
}

PriorSpec prior(const DiffusionSpec& spec) {
  spec.validate();
  PriorSpec p;
  p.mean.assign(spec.dim, 0.0);
  double log_var = 0.0;
  switch (spec.kind) {
    case Family::OU:
      // Stationary law of the forward OU process.
      for (std::size_t i = 0; i < spec.dim; ++i) p.mean[i] = spec.mu_at(i);
      log_var = std::log(spec.sigma * spec.sigma / (2.0 * spec.theta));
      break;
    case Family::COU: {
      for (std::size_t i = 0; i < spec.dim; ++i) p.mean[i] = spec.mu_at(i);
      const double a = 2.0 * spec.theta * spec.T;
      // log(expm1(a)) = a + log1p(-exp(-a)), stable for large a.
      log_var = std::log(spec.sigma * spec.sigma / (2.0 * spec.theta)) + a + std::log1p(-std::exp(-a));
      break;
    }
    case Family::VE: log_var = 2.0 * std::log(spec.sigma_max); break;
    case Family::VP:
    case Family::SubVP: log_var = 0.0; break;
    case Family::CVP: {
      const double a = 0.5 * spec.T * (spec.beta_max + spec.beta_min);
      log_var = a + std::log1p(-std::exp(-a));
      break;
    }
    case Family::CSubVP: {
      const double a = 0.5 * spec.T * (spec.beta_max + spec.beta_min);
      log_var = 2.0 * (a + std::log1p(-std::exp(-a)));
      break;
    }
  }
  if (log_var > std::log(kMaxPriorVariance)) {
    std::ostringstream os;
    os << to_string(spec.kind) << ": prior variance exp(" << log_var << ") exceeds " << kMaxPriorVariance
       << "; reduce T or the drift/beta scale";
    throw ConfigError(os.str());
  }
  p.variance = std::exp(log_var);
  return p;
}

ContractionProfile contraction_profile(const DiffusionSpec& spec, const ContractionQuery& q) {
  spec.validate();
  ContractionProfile prof;
  prof.r_b = [spec](double t) { return drift_factor(spec, t); };
  // b(t) is affine in t for every family, so the extremes sit at the endpoints.
  prof.min_r_b = std::min(drift_factor(spec, 0.0), drift_factor(spec, spec.T));
  prof.is_cdpm = prof.min_r_b > 0.0;

  if (q.L || q.L_s) {
    const std::size_t m = std::max<std::size_t>(q.grid, 2);
    double alpha = std::numeric_limits<double>::infinity();
    double beta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const double t = spec.T * static_cast<double>(i) / static_cast<double>(m - 1);
      const double rb = drift_factor(spec, t);
      const double s2 = diffusion_sq(spec, t);
      if (q.L) alpha = std::min(alpha, rb - (*q.L + q.h) * s2);
      if (q.L_s) beta = std::min(beta, rb - *q.L_s * s2);
    }
    if (q.L) prof.alpha = alpha;
    if (q.L_s) prof.beta = beta;
  }
  return prof;
}

}  // namespace cdpm
