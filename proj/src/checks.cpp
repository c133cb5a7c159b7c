#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "cdpm/bounds.hpp"
#include "cdpm/csv.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/experiments.hpp"
#include "cdpm/rng.hpp"
#include "cdpm/transforms.hpp"

namespace cdpm {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::vector<std::uint64_t> first_seeds(std::size_t n) {
  std::vector<std::uint64_t> s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

Samples gaussian_cloud(std::size_t n, std::size_t d, double mean, double sd, std::uint64_t seed) {
  Samples x(n, d);
  auto g = make_stream({seed, role(StreamRole::Dataset)});
  for (double& v : x.data) v = mean + sd * standard_normal(g);
  return x;
}

// Empirical W2 (or W2^2) of the exact-score sampler with injected noise, one value per seed.
std::vector<double> empirical_w2(const DiffusionSpec& spec, const MixtureTarget& target, double eps, NoiseMode mode,
                                 const BoundsParams& p, const RunContext& ctx, bool squared) {
  std::vector<double> out;
  for (std::uint64_t seed : p.seeds) {
    ScoreField score = noisy_score(exact_score_field(spec, target),
                                   NoiseModel{mode, eps, derive_seed(seed, role(StreamRole::ScoreNoise))});
    ReverseProcess proc = make_reverse_process(spec, score, p.t_eps_fraction);
    SamplerConfig cfg;
    cfg.n_steps = p.n_steps;
    cfg.n_paths = p.n_paths;
    cfg.seed = seed;
    cfg.threads = ctx.threads;
    const TrajectoryBatch b = sample_em(proc, cfg);
    const Samples ref = target.sample(p.n_paths, derive_seed(seed, role(StreamRole::Target)));
    const double w = w2_auto(b.final_state(), ref).value;
    out.push_back(squared ? w * w : w);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Bounds

BoundsParams BoundsParams::defaults() {
  BoundsParams p;
  p.cou = DiffusionSpec::defaults(Family::COU, 1);
  p.cvp = DiffusionSpec::defaults(Family::CVP, 1);
  p.seeds = first_seeds(20);
  return p;
}

std::vector<CheckLine> run_bounds(const BoundsParams& p, const RunContext& ctx) {
  std::vector<CheckLine> lines;
  std::optional<CsvWriter> csv, utab;
  if (!ctx.out_dir.empty()) {
    csv.emplace(ctx.out_dir / "bounds.csv", Provenance{ctx.command, ctx.config_hash, p.seeds},
                std::vector<std::string>{"family", "quantity", "epsilon", "h", "eta", "L", "u_T", "bound",
                                         "empirical_mean", "empirical_se", "overflow", "pass"});
    utab.emplace(ctx.out_dir / "bounds_u.csv", Provenance{ctx.command, ctx.config_hash, p.seeds},
                 std::vector<std::string>{"family", "h", "t", "u"});
  }

  // Sensitivity bound on W2 for the first family, standard Gaussian data.
  {
    const DiffusionSpec& spec = p.cou;
    const MixtureTarget target = MixtureTarget::gaussian(std::vector<double>(spec.dim, 0.0), 1.0);
    double L = 0.0;
    if (p.L) {
      L = *p.L;
    } else {
      for (std::size_t i = 0; i <= 200; ++i)
        L = std::max(L, score_lipschitz(spec, target, spec.T * static_cast<double>(i) / 200.0).value);
    }
    double eta = 0.0;
    if (p.eta) {
      eta = *p.eta;
    } else {
      const PerturbationKernel k = kernel(spec, spec.T);
      const PriorSpec pr = prior(spec);
      std::vector<double> mT(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) mT[j] = spec.mu_at(j) * (1.0 - k.mean_factor);
      eta = w2_gaussian(mT, k.mean_factor * k.mean_factor + k.cond_var(), pr.mean, pr.variance);
    }
    const std::string name(to_string(spec.kind));
    for (double eps : p.epsilons) {
      BoundInputs in = BoundInputs::from_spec(spec);
      in.L = L;
      in.eta = eta;
      in.epsilon = eps;
      BoundValue bv;
      if (p.h) {
        in.h = *p.h;
        bv = sampling_error_bound(in);
      } else {
        bv = sampling_error_bound_best_h(in);
      }
      MeanSe emp{std::numeric_limits<double>::quiet_NaN(), 0.0, 0};
      bool ok = std::isfinite(bv.value) || bv.overflow;
      if (p.empirical) {
        emp = mean_se(empirical_w2(spec, target, eps, p.mode, p, ctx, false));
        ok = emp.mean - p.slack_se * emp.se <= bv.value;
      }
      lines.push_back({"bounds " + name + " W2 bound dominates at eps=" + fmt(eps), ok,
                       "bound " + fmt(bv.value) + " (h " + fmt(bv.h) + ", eta " + fmt(eta) + ", L " + fmt(L) +
                           "), empirical " + fmt(emp.mean) + " +- " + fmt(emp.se) +
                           (bv.overflow ? ", " + bv.diagnostics : ""),
                       !p.empirical});
      if (csv) {
        csv->cell(name).cell("W2").cell(eps).cell(bv.h).cell(eta).cell(L).cell(bv.u_T).cell(bv.value).cell(emp.mean)
            .cell(emp.se).cell(bv.overflow ? "1" : "0").cell(ok ? "1" : "0");
        csv->end_row();
      }
      if (utab && eps == p.epsilons.front()) {
        in.h = bv.h;
        for (std::size_t i = 0; i < p.u_grid; ++i) {
          const double t = spec.T * static_cast<double>(i) / static_cast<double>(p.u_grid - 1);
          utab->cell(name).cell(in.h).cell(t).cell(u_of_t(in, t));
          utab->end_row();
        }
      }
    }
  }

  // Strongly log-concave bound on W2^2, data N(0, 1/kappa).
  {
    const DiffusionSpec& spec = p.cvp;
    const MixtureTarget target = MixtureTarget::gaussian(std::vector<double>(spec.dim, 0.0), 1.0 / p.kappa);
    const std::string name(to_string(spec.kind));
    for (double eps : p.epsilons) {
      BoundInputs in = BoundInputs::from_spec(spec);
      in.kappa = p.kappa;
      in.epsilon = eps;
      in.second_moment = p.second_moment ? *p.second_moment : static_cast<double>(spec.dim) / p.kappa;
      in.h = p.h ? *p.h : cvp_default_h(in);
      const BoundValue bv = cvp_bound(in);
      MeanSe emp{std::numeric_limits<double>::quiet_NaN(), 0.0, 0};
      bool ok = std::isfinite(bv.value);
      if (p.empirical) {
        emp = mean_se(empirical_w2(spec, target, eps, p.mode, p, ctx, true));
        ok = emp.mean - p.slack_se * emp.se <= bv.value;
      }
      lines.push_back({"bounds " + name + " W2^2 bound dominates at eps=" + fmt(eps), ok,
                       "bound " + fmt(bv.value) + " (h " + fmt(in.h) + ", kappa " + fmt(p.kappa) + "), empirical " +
                           fmt(emp.mean) + " +- " + fmt(emp.se),
                       !p.empirical});
      if (csv) {
        csv->cell(name).cell("W2sq").cell(eps).cell(in.h).cell(std::numeric_limits<double>::quiet_NaN())
            .cell(std::numeric_limits<double>::quiet_NaN()).cell(bv.u_T).cell(bv.value).cell(emp.mean).cell(emp.se)
            .cell("0").cell(ok ? "1" : "0");
        csv->end_row();
      }
      if (utab && eps == p.epsilons.front()) {
        for (std::size_t i = 0; i < p.u_grid; ++i) {
          const double t = spec.T * static_cast<double>(i) / static_cast<double>(p.u_grid - 1);
          utab->cell(name).cell(in.h).cell(t).cell(u_cvp(in, t));
          utab->end_row();
        }
      }
    }
  }
  return lines;
}

// ---------------------------------------------------------------------------
// VE <-> CSubVP transform

TransformParams TransformParams::defaults() {
  TransformParams p;
  p.ve = DiffusionSpec::defaults(Family::VE, 1);
  p.c = DiffusionSpec::defaults(Family::CSubVP, 1);
  // Largest horizon allowed for the default schedules is about 4.47.
  p.c.T = 4.0;
  return p;
}

std::vector<CheckLine> run_transform_check(const TransformParams& p, const RunContext& ctx) {
  std::vector<CheckLine> lines;
  const TransformMap map(p.ve, p.c);
  const PreconditionReport pre = check_precondition(map);
  lines.push_back({"transform precondition sigma_max^2 - sigma_min^2 > g(T)^2", pre.ok,
                   "g(T)^2 " + fmt(pre.g_T_sq) + " vs " + fmt(pre.ve_gap) + ", largest admissible T " +
                       fmt(pre.max_T)});
  {
    DiffusionSpec sr = p.c;
    sr.beta_min = 0.01;
    sr.beta_max = 8.0;
    sr.T = 1.0;
    const PreconditionReport r = check_precondition(TransformMap(p.ve, sr));
    lines.push_back({"transform precondition at beta 0.01..8, T=1", r.ok,
                     "g(1)^2 " + fmt(r.g_T_sq) + " vs " + fmt(r.ve_gap) + ", largest admissible T " + fmt(r.max_T),
                     true});
  }
  if (!pre.ok) return lines;

  const std::size_t d = p.c.dim;
  const MixtureTarget target = MixtureTarget::gaussian(std::vector<double>(d, p.target_mean), p.target_var);
  const ScoreField ve_score = exact_score_field(p.ve, target);
  const ScoreField chain = transport_score(map, ve_score, TransportRule::ChainRule);
  const ScoreField literal = transport_score(map, ve_score, TransportRule::Literal);

  std::optional<CsvWriter> csv;
  if (!ctx.out_dir.empty())
    csv.emplace(ctx.out_dir / "transform.csv", Provenance{ctx.command, ctx.config_hash, {}},
                std::vector<std::string>{"t", "tau", "f", "g", "identity_residual"});

  double tau_res = 0.0, score_res = 0.0, dens_res = 0.0, moment_res = 0.0, literal_dev = 0.0;
  bool monotone = true;
  double prev_tau = -1.0;
  std::vector<double> x(d), s_c(d), s_t(d), s_l(d);
  for (std::size_t i = 0; i < p.nt; ++i) {
    const double t = p.c.T * static_cast<double>(i) / static_cast<double>(p.nt - 1);
    const double tau = map.tau(t);
    const double res = map.identity_residual(t);
    tau_res = std::max(tau_res, res);
    if (i > 0 && !(tau > prev_tau)) monotone = false;
    prev_tau = tau;
    const double f = map.f(t), g = map.g(t);
    // VE at tau scaled by f reproduces the CSubVP kernel: f * s_VE(tau) = s_C(t).
    const double s_ve = kernel(p.ve, tau).cond_std;
    const double s_cs = kernel(p.c, t).cond_std;
    if (s_cs > 0.0) moment_res = std::max(moment_res, std::abs(f * s_ve - s_cs) / s_cs);
    if (csv) {
      csv->cell(t).cell(tau).cell(f).cell(g).cell(res);
      csv->end_row();
    }
    for (std::size_t j = 0; j < p.nx; ++j) {
      std::fill(x.begin(), x.end(), p.x_lo + (p.x_hi - p.x_lo) * static_cast<double>(j) / static_cast<double>(p.nx - 1));
      const auto direct = exact_score(p.c, target, t, x);
      chain.eval(t, x, s_t, {});
      literal.eval(t, x, s_l, {});
      for (std::size_t k = 0; k < d; ++k) {
        score_res = std::max(score_res, std::abs(direct[k] - s_t[k]));
        literal_dev = std::max(literal_dev, std::abs(direct[k] - s_l[k]));
      }
      dens_res = std::max(dens_res, std::abs(marginal_logdensity(p.c, target, t, x) - chain.log_density(t, x)));
    }
  }
  lines.push_back({"transform tau identity residual <= " + fmt(p.tau_tol) + " and tau increasing",
                   tau_res <= p.tau_tol && monotone && map.tau(0.0) == 0.0,
                   "max relative residual " + fmt(tau_res) + (monotone ? "" : ", not monotone")});
  lines.push_back({"transform score transport residual <= " + fmt(p.tol), score_res <= p.tol,
                   "max abs " + fmt(score_res) + " on " + std::to_string(p.nt) + "x" + std::to_string(p.nx) + " grid"});
  lines.push_back({"transform density identity residual <= " + fmt(p.tol), dens_res <= p.tol, "max abs " + fmt(dens_res)});
  lines.push_back({"transform kernel moment round trip <= 1e-10", moment_res <= 1e-10, "max relative " + fmt(moment_res)});
  lines.push_back({"transform literal formula deviation from exact score", true, "max abs " + fmt(literal_dev), true});
  return lines;
}

// ---------------------------------------------------------------------------
// W2 estimators

std::vector<CheckLine> run_w2_oracle(const W2OracleParams& p, const RunContext& ctx) {
  std::vector<CheckLine> lines;
  std::optional<CsvWriter> csv;
  if (!ctx.out_dir.empty())
    csv.emplace(ctx.out_dir / "w2_oracle.csv", Provenance{ctx.command, ctx.config_hash, {p.seed}},
                std::vector<std::string>{"test", "instance", "n", "d", "estimate", "reference", "abs_diff"});

  double worst = 0.0;
  for (std::size_t k = 0; k < p.instances; ++k) {
    const std::size_t n = 2 + k % (p.max_n - 1);
    const std::size_t d = 1 + k % 3;
    const Samples a = gaussian_cloud(n, d, 0.0, 1.0, derive_seed(p.seed, 2 * k));
    const Samples b = gaussian_cloud(n, d, 0.5, 1.5, derive_seed(p.seed, 2 * k + 1));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = a.row(i)[j] - b.row(perm[i])[j];
          c += diff * diff;
        }
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const double ref = std::sqrt(best / static_cast<double>(n));
    const double est = w2_assignment(a, b).value;
    worst = std::max(worst, std::abs(est - ref) / std::max(1.0, ref));
    if (csv) {
      csv->cell("brute_force").cell(static_cast<std::uint64_t>(k)).cell(static_cast<std::uint64_t>(n))
          .cell(static_cast<std::uint64_t>(d)).cell(est).cell(ref).cell(std::abs(est - ref));
      csv->end_row();
    }
  }
  lines.push_back({"w2 assignment equals permutation brute force", worst <= 1e-12,
                   std::to_string(p.instances) + " instances, max relative diff " + fmt(worst)});

  worst = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    const Samples a = gaussian_cloud(p.sorted_n, 1, 0.0, 1.0, derive_seed(p.seed, 1000 + 2 * k));
    const Samples b = gaussian_cloud(p.sorted_n, 1, 0.3, 2.0, derive_seed(p.seed, 1001 + 2 * k));
    const double s = w2_sorted_1d(a, b).value;
    const double e = w2_assignment(a, b).value;
    worst = std::max(worst, std::abs(s - e));
    if (csv) {
      csv->cell("sorted_vs_assignment").cell(static_cast<std::uint64_t>(k)).cell(static_cast<std::uint64_t>(p.sorted_n))
          .cell(std::uint64_t{1}).cell(s).cell(e).cell(std::abs(s - e));
      csv->end_row();
    }
  }
  lines.push_back({"w2 sorted 1-D equals assignment to 1e-12", worst <= 1e-12, "max abs diff " + fmt(worst)});

  {
    const double m1 = 0.0, v1 = 1.0, m2 = 1.0, v2 = 4.0;
    const Samples a = gaussian_cloud(p.gaussian_n, 1, m1, std::sqrt(v1), derive_seed(p.seed, 5000));
    const Samples b = gaussian_cloud(p.gaussian_n, 1, m2, std::sqrt(v2), derive_seed(p.seed, 5001));
    const double est = w2_sorted_1d(a, b).value;
    const double se = bootstrap_std_error(a, b, w2_sorted_1d, p.bootstrap, derive_seed(p.seed, 5002));
    const double ref = w2_gaussian(std::vector<double>{m1}, v1, std::vector<double>{m2}, v2);
    lines.push_back({"w2 Gaussian closed form within 3 bootstrap SE", std::abs(est - ref) <= 3.0 * se,
                     "sampled " + fmt(est) + " +- " + fmt(se) + ", closed form " + fmt(ref)});
    if (csv) {
      csv->cell("gaussian").cell(std::uint64_t{0}).cell(static_cast<std::uint64_t>(p.gaussian_n)).cell(std::uint64_t{1})
          .cell(est).cell(ref).cell(std::abs(est - ref));
      csv->end_row();
    }
  }
  return lines;
}

std::vector<CheckLine> run_sinkhorn_check(const SinkhornCheckParams& p, const RunContext&) {
  std::vector<CheckLine> lines;
  const Samples a = gaussian_cloud(p.n, 2, 0.0, 1.0, derive_seed(p.seed, 1));
  const Samples b = gaussian_cloud(p.n, 2, 0.7, 1.2, derive_seed(p.seed, 2));
  double mean_cost = 0.0;
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t j = 0; j < p.n; ++j)
      for (std::size_t k = 0; k < 2; ++k) mean_cost += std::pow(a.row(i)[k] - b.row(j)[k], 2);
  mean_cost /= static_cast<double>(p.n * p.n);
  SinkhornOptions opt;
  opt.reg = p.reg_scale * mean_cost;
  const W2Report sk = w2_sinkhorn(a, b, opt);
  const double exact = w2_assignment(a, b).value;
  const double rel = std::abs(sk.value - exact) / exact;
  lines.push_back({"sinkhorn within " + fmt(100 * p.rel_tol) + "% of assignment", rel <= p.rel_tol,
                   "sinkhorn " + fmt(sk.value) + " vs exact " + fmt(exact) + ", reg " + fmt(opt.reg) + ", " +
                       std::to_string(sk.iterations) + " iterations" + (sk.converged ? "" : " (not converged)")});
  bool mono = true;
  for (std::size_t i = 1; i < sk.trace.size(); ++i)
    if (sk.trace[i] < sk.trace[i - 1] - 1e-12 * std::abs(sk.trace[i - 1])) mono = false;
  lines.push_back({"sinkhorn dual objective nondecreasing", mono, std::to_string(sk.trace.size()) + " iterations"});
  opt.debiased = true;
  opt.reg = 0.05 * mean_cost;
  const double self = w2_sinkhorn(a, a, opt).value;
  lines.push_back({"sinkhorn debiased self-distance <= 1e-6", self <= 1e-6, "value " + fmt(self)});
  return lines;
}

// ---------------------------------------------------------------------------
// Score-matching objectives

ScoreMatchingParams ScoreMatchingParams::defaults() {
  ScoreMatchingParams p;
  p.spec = DiffusionSpec::defaults(Family::OU, 1);
  return p;
}

std::vector<CheckLine> run_score_matching(const ScoreMatchingParams& p, const RunContext& ctx) {
  const DiffusionSpec& spec = p.spec;
  const MixtureTarget target = MixtureTarget::gaussian(std::vector<double>(spec.dim, p.target_mean), p.target_var);
  const ScoreField oracle = exact_score_field(spec, target);
  AffineScoreFamily fam =
      AffineScoreFamily::constant({0.0, 0.5 * spec.T, spec.T}, p.slope0, std::vector<double>(spec.dim, p.offset0));
  // Distinct values per node so the gradient is not symmetric across the grid.
  auto base = fam.parameters();
  for (std::size_t k = 0; k < base.size(); ++k) base[k] += 0.05 * static_cast<double>(k);
  const LossPlan plan{Weighting::KernelVariance, p.n, p.seed, 1e-3};

  enum class Obj { ESM, ISM, DSM };
  auto loss = [&](Obj o, const std::vector<double>& params) {
    AffineScoreFamily f = fam;
    f.set_parameters(params);
    const ScoreField s = f.field();
    switch (o) {
      case Obj::ESM: return esm_loss(s, oracle, spec, target, plan).mean;
      case Obj::ISM: return ism_loss(s, spec, target, plan).mean;
      case Obj::DSM: return dsm_loss(s, spec, target, plan).mean;
    }
    return 0.0;
  };
  auto grad = [&](Obj o) {
    std::vector<double> g(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
      auto up = base, dn = base;
      up[k] += p.fd_step;
      dn[k] -= p.fd_step;
      g[k] = (loss(o, up) - loss(o, dn)) / (2.0 * p.fd_step);
    }
    return g;
  };
  const auto ge = grad(Obj::ESM), gi = grad(Obj::ISM), gd = grad(Obj::DSM);
  auto rel = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      num += (a[k] - b[k]) * (a[k] - b[k]);
      den += a[k] * a[k];
    }
    return std::sqrt(num / den);
  };
  const double ri = rel(ge, gi), rd = rel(ge, gd);
  if (!ctx.out_dir.empty()) {
    CsvWriter w(ctx.out_dir / "score_matching.csv", Provenance{ctx.command, ctx.config_hash, {p.seed}},
                {"parameter", "grad_esm", "grad_ism", "grad_dsm"});
    for (std::size_t k = 0; k < ge.size(); ++k) {
      w.cell(static_cast<std::uint64_t>(k)).cell(ge[k]).cell(gi[k]).cell(gd[k]);
      w.end_row();
    }
  }
  return {
      {"score matching ESM vs ISM gradients within " + fmt(100 * p.rel_tol) + "%", ri <= p.rel_tol,
       "relative difference " + fmt(ri) + " at n=" + std::to_string(p.n)},
      {"score matching ESM vs DSM gradients within " + fmt(100 * p.rel_tol) + "%", rd <= p.rel_tol,
       "relative difference " + fmt(rd) + " at n=" + std::to_string(p.n)},
  };
}

}  // namespace cdpm
