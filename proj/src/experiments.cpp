#include "cdpm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "cdpm/csv.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/rng.hpp"
#include "cdpm/bounds.hpp"

namespace cdpm {

namespace {

std::vector<std::uint64_t> first_seeds(std::size_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

Provenance provenance(const RunContext& ctx, const std::vector<std::uint64_t>& seeds) {
  return Provenance{ctx.command, ctx.config_hash, seeds};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Non-contractive partner of each contractive family.
std::optional<Family> partner(Family f) {
  switch (f) {
    case Family::COU: return Family::OU;
    case Family::CVP: return Family::VP;
    case Family::CSubVP: return Family::SubVP;
    default: return std::nullopt;
  }
}

ScoreField noisy_exact(const DiffusionSpec& spec, const MixtureTarget& target, double eps, NoiseMode mode,
                       std::uint64_t seed) {
  return noisy_score(exact_score_field(spec, target), NoiseModel{mode, eps, seed});
}

// Sup over a time grid of the exact score Lipschitz constant.
double sup_lipschitz(const DiffusionSpec& spec, const MixtureTarget& target, std::size_t grid = 201) {
  double L = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double t = spec.T * static_cast<double>(i) / static_cast<double>(grid - 1);
    L = std::max(L, score_lipschitz(spec, target, t).value);
  }
  return L;
}

}  // namespace

bool all_pass(const std::vector<CheckLine>& lines) {
  return std::all_of(lines.begin(), lines.end(), [](const CheckLine& c) { return c.pass || c.informational; });
}

std::string format_check(const CheckLine& c) {
  std::string tag = c.informational ? "INFO" : (c.pass ? "PASS" : "FAIL");
  std::string s = tag + " " + c.name;
  if (!c.detail.empty()) s += " :: " + c.detail;
  return s;
}

void write_summary(const RunContext& ctx, const std::string& stem, const std::vector<CheckLine>& lines,
                   const std::vector<std::uint64_t>& seeds) {
  if (ctx.out_dir.empty()) return;
  CsvWriter w(ctx.out_dir / (stem + "_summary.csv"), provenance(ctx, seeds), {"check", "status", "detail"});
  for (const auto& c : lines) {
    std::string detail = c.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    w.cell(c.name).cell(c.informational ? "info" : (c.pass ? "pass" : "fail")).cell(detail);
    w.end_row();
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& batch, const RunContext& ctx) {
  const std::size_t d = batch.states.empty() ? 0 : batch.states.front().d;
  std::vector<std::string> cols{"path", "step", "t"};
  for (std::size_t j = 0; j < d; ++j) cols.push_back("x" + std::to_string(j));
  CsvWriter w(path, provenance(ctx, {batch.seed}), cols);
  for (std::size_t s = 0; s < batch.states.size(); ++s) {
    const Samples& x = batch.states[s];
    for (std::size_t i = 0; i < x.n; ++i) {
      w.cell(static_cast<std::uint64_t>(i)).cell(static_cast<std::uint64_t>(batch.steps[s])).cell(batch.times[s]);
      for (double v : x.row(i)) w.cell(v);
      w.end_row();
    }
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return stream_key({seed, 0xD1B54A32D192ED03ULL, tag}); }

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  std::vector<double> ok;
  for (double x : v)
    if (std::isfinite(x)) ok.push_back(x);
  r.n = ok.size();
  if (ok.empty()) {
    r.mean = r.se = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double s = 0.0;
  for (double x : ok) s += x;
  r.mean = s / static_cast<double>(ok.size());
  if (ok.size() > 1) {
    double ss = 0.0;
    for (double x : ok) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(ok.size() - 1) / static_cast<double>(ok.size()));
  }
  return r;
}

double paired_t_pvalue_less(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw UsageError("paired t-test needs two equal samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const MeanSe m = mean_se(d);
  if (m.n < 2) return 1.0;
  if (m.se == 0.0) return m.mean < 0.0 ? 0.0 : 1.0;
  const boost::math::students_t dist(static_cast<double>(m.n - 1));
  return boost::math::cdf(dist, m.mean / m.se);
}

// ---------------------------------------------------------------------------
// Kernel fidelity

KernelCheckParams KernelCheckParams::defaults() {
  KernelCheckParams p;
  for (Family f : kAllFamilies) p.specs.push_back(DiffusionSpec::defaults(f, 1));
  return p;
}

std::vector<CheckLine> run_kernel_check(const KernelCheckParams& p, const RunContext& ctx) {
  std::vector<CheckLine> lines;
  std::optional<CsvWriter> csv;
  if (!ctx.out_dir.empty())
    csv.emplace(ctx.out_dir / "kernel_check.csv", provenance(ctx, {p.seed}),
                std::vector<std::string>{"family", "t", "mean", "mean_exact", "mean_se", "var", "var_exact", "var_se",
                                         "z_mean", "z_var", "pass"});
  for (std::size_t fi = 0; fi < p.specs.size(); ++fi) {
    const DiffusionSpec& spec = p.specs[fi];
    spec.validate();
    Samples start(p.n_paths, spec.dim, p.x0);
    std::vector<double> times;
    for (double fr : p.fractions) times.push_back(fr * spec.T);
    const auto states = simulate_forward_em(spec, start, p.dt, times, derive_seed(p.seed, fi), ctx.threads);
    bool ok = true;
    double worst = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const PerturbationKernel ker = kernel(spec, times[k]);
      const double n = static_cast<double>(p.n_paths);
      // Coordinate 0 only; the coordinates are i.i.d. under the isotropic kernel.
      double m = 0.0;
      for (std::size_t i = 0; i < p.n_paths; ++i) m += states[k].data[i * spec.dim];
      m /= n;
      double m2 = 0.0, m4 = 0.0;
      for (std::size_t i = 0; i < p.n_paths; ++i) {
        const double c = states[k].data[i * spec.dim] - m;
        m2 += c * c;
        m4 += c * c * c * c;
      }
      const double var = m2 / (n - 1.0);
      m4 /= n;
      const double mean_exact = spec.mu_at(0) + ker.mean_factor * (p.x0 - spec.mu_at(0));
      const double var_exact = ker.cond_var();
      const double mean_se = std::sqrt(var / n);
      const double var_se = std::sqrt(std::max(0.0, m4 - var * var) / n);
      const double zm = (m - mean_exact) / mean_se;
      const double zv = (var - var_exact) / var_se;
      const bool pass = std::abs(zm) <= p.z_tol && std::abs(zv) <= p.z_tol;
      ok = ok && pass;
      worst = std::max({worst, std::abs(zm), std::abs(zv)});
      if (csv) {
        csv->cell(to_string(spec.kind)).cell(times[k]).cell(m).cell(mean_exact).cell(mean_se).cell(var)
            .cell(var_exact).cell(var_se).cell(zm).cell(zv).cell(pass ? "1" : "0");
        csv->end_row();
      }
    }
    lines.push_back({"kernel " + std::string(to_string(spec.kind)), ok,
                     "max |z| = " + fmt(worst) + " (tolerance " + fmt(p.z_tol) + ")"});
  }
  return lines;
}

// ---------------------------------------------------------------------------
// OU vs COU under injected score error

CompareParams CompareParams::defaults() {
  CompareParams p;
  p.specs = {DiffusionSpec::defaults(Family::OU, 1), DiffusionSpec::defaults(Family::COU, 1)};
  p.seeds = first_seeds(20);
  return p;
}

CompareResult run_compare(const CompareParams& p, const RunContext& ctx) {
  if (p.specs.empty() || p.epsilons.empty() || p.dts.empty() || p.seeds.empty())
    throw ConfigError("compare needs families, epsilons, deltas and seeds");
  const std::size_t cells = p.specs.size() * p.epsilons.size() * p.dts.size();
  std::cerr << "compare: " << cells << " cells x " << p.seeds.size() << " seeds = " << cells * p.seeds.size()
            << " sampler runs\n";
  CompareResult res;
  for (const auto& spec : p.specs) {
    spec.validate();
    const MixtureTarget target = MixtureTarget::point_mass(std::vector<double>(spec.dim, p.x0));
    for (double eps : p.epsilons) {
      for (double dt : p.dts) {
        CompareCell cell;
        cell.family = spec.kind;
        cell.epsilon = eps;
        cell.dt = dt;
        const double horizon = spec.T * (1.0 - p.t_eps_fraction);
        cell.n_steps = static_cast<std::size_t>(std::max<long long>(1, std::llround(horizon / dt)));
        std::vector<double> w2s;
        for (std::uint64_t seed : p.seeds) {
          ScoreField score =
              noisy_exact(spec, target, eps, p.mode, derive_seed(seed, role(StreamRole::ScoreNoise)));
          ReverseProcess proc = make_reverse_process(spec, score, p.t_eps_fraction);
          SamplerConfig cfg;
          cfg.n_steps = cell.n_steps;
          cfg.n_paths = p.n_paths;
          cfg.seed = seed;
          cfg.threads = ctx.threads;
          try {
            const TrajectoryBatch b = sample_em(proc, cfg);
            const Samples ref = target.sample(p.n_paths, derive_seed(seed, role(StreamRole::Target)));
            w2s.push_back(w2_auto(b.final_state(), ref).value);
          } catch (const IntegrationDiverged&) {
            ++cell.diverged;
            w2s.push_back(std::numeric_limits<double>::quiet_NaN());
          }
        }
        cell.w2 = mean_se(w2s);
        res.cells.push_back(cell);
      }
    }
  }

  auto find = [&](Family f, double eps, double dt) -> const CompareCell* {
    for (const auto& c : res.cells)
      if (c.family == f && c.epsilon == eps && c.dt == dt) return &c;
    return nullptr;
  };

  for (const auto& spec : p.specs) {
    const auto other = partner(spec.kind);
    if (!other) continue;
    std::size_t bad = 0, total = 0;
    std::string worst;
    for (double eps : p.epsilons)
      for (double dt : p.dts) {
        const CompareCell* c = find(spec.kind, eps, dt);
        const CompareCell* o = find(*other, eps, dt);
        if (!c || !o) continue;
        ++total;
        if (!(c->w2.mean <= o->w2.mean)) {
          ++bad;
          if (worst.empty())
            worst = "; first violation eps=" + fmt(eps) + " dt=" + fmt(dt) + ": " + fmt(c->w2.mean) + " vs " +
                    fmt(o->w2.mean);
        }
      }
    if (total == 0) continue;
    res.checks.push_back({"compare " + std::string(to_string(spec.kind)) + " <= " + std::string(to_string(*other)) +
                              " in every cell",
                          bad == 0, std::to_string(bad) + "/" + std::to_string(total) + " cells violate" + worst});
  }

  for (const auto& spec : p.specs) {
    if (spec.kind != Family::OU || p.epsilons.size() < 2) continue;
    std::vector<double> eps = p.epsilons;
    std::sort(eps.begin(), eps.end());
    for (double dt : p.dts) {
      bool inc = true;
      std::string trail;
      for (std::size_t i = 0; i < eps.size(); ++i) {
        const CompareCell* c = find(spec.kind, eps[i], dt);
        trail += (i ? " " : "") + fmt(c->w2.mean);
        if (i > 0 && !(c->w2.mean > find(spec.kind, eps[i - 1], dt)->w2.mean)) inc = false;
      }
      res.checks.push_back({"compare OU strictly increasing in eps at dt=" + fmt(dt), inc, "W2: " + trail});
    }
  }

  if (p.check_anchors) {
    const std::map<Family, double> anchors{{Family::COU, 0.8}, {Family::OU, 1.3}};
    for (const auto& [fam, ref] : anchors) {
      const CompareCell* c = find(fam, 1.0, 0.02);
      if (!c) continue;
      const bool ok = c->w2.mean >= ref / 2.0 && c->w2.mean <= ref * 2.0;
      res.checks.push_back({"compare anchor " + std::string(to_string(fam)) + " at eps=1 dt=0.02 within 2x of " +
                                fmt(ref),
                            ok, "measured " + fmt(c->w2.mean) + " +- " + fmt(c->w2.se)});
    }
  }

  if (!ctx.out_dir.empty()) {
    CsvWriter w(ctx.out_dir / "compare.csv", provenance(ctx, p.seeds),
                {"family", "epsilon", "dt", "n_steps", "w2_mean", "w2_se", "n_seeds", "n_diverged"});
    for (const auto& c : res.cells) {
      w.cell(to_string(c.family)).cell(c.epsilon).cell(c.dt).cell(static_cast<std::uint64_t>(c.n_steps))
          .cell(c.w2.mean).cell(c.w2.se).cell(static_cast<std::uint64_t>(c.w2.n))
          .cell(static_cast<std::uint64_t>(c.diverged));
      w.end_row();
    }
    std::vector<std::string> cols{"dt", "epsilon"};
    for (const auto& s : p.specs) cols.emplace_back(to_string(s.kind));
    CsvWriter t(ctx.out_dir / "compare_table.csv", provenance(ctx, p.seeds), cols);
    for (double dt : p.dts)
      for (double eps : p.epsilons) {
        t.cell(dt).cell(eps);
        for (const auto& s : p.specs) t.cell(find(s.kind, eps, dt)->w2.mean);
        t.end_row();
      }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Swiss Roll

SwissrollParams SwissrollParams::defaults() {
  SwissrollParams p;
  for (Family f : {Family::SubVP, Family::CSubVP}) {
    DiffusionSpec s = DiffusionSpec::defaults(f, 2);
    s.beta_min = 0.01;
    s.beta_max = 8.0;
    s.T = 1.0;
    p.specs.push_back(s);
  }
  p.specs.push_back(DiffusionSpec::defaults(Family::OU, 2));
  p.specs.push_back(DiffusionSpec::defaults(Family::COU, 2));
  p.data.kind = DatasetKind::SwissRoll;
  p.data.n = 1000;
  p.seeds = first_seeds(10);
  p.sampler.method = Method::PC;
  p.sampler.snr = 0.2;
  p.sampler.corrector_steps = 1;
  p.sampler.n_steps = 300;
  return p;
}

SwissrollResult run_swissroll(const SwissrollParams& p, const RunContext& ctx) {
  if (p.specs.empty() || p.seeds.empty()) throw ConfigError("swissroll needs families and seeds");
  SwissrollResult res;
  std::map<Family, std::vector<double>> by_family;
  std::size_t expected_snapshots = 0;
  for (std::uint64_t seed : p.seeds) {
    DatasetSpec train = p.data;
    train.seed = derive_seed(seed, 1);
    DatasetSpec held = p.data;
    held.seed = derive_seed(seed, 2);
    held.n = p.n_eval;
    const MixtureTarget target = dataset_target(train);
    const Samples held_out = generate_dataset(held);
    for (const auto& spec : p.specs) {
      if (spec.dim != target.dim()) throw ConfigError("swissroll families must use the data dimension");
      ScoreField score =
          noisy_exact(spec, target, p.epsilon, p.mode, derive_seed(seed, role(StreamRole::ScoreNoise)));
      ReverseProcess proc = make_reverse_process(spec, score, p.t_eps_fraction);
      SamplerConfig cfg = p.sampler;
      cfg.seed = seed;
      cfg.n_paths = p.n_eval;
      cfg.threads = ctx.threads;
      const bool snap = seed == p.seeds.front() && ctx.save_every > 0 && !ctx.out_dir.empty();
      cfg.save_every = snap ? ctx.save_every : 0;
      SwissrollRow row{spec.kind, seed, 0.0, false};
      try {
        const TrajectoryBatch b = sample(proc, cfg);
        row.w2 = w2_auto(b.final_state(), held_out).value;
        if (snap) {
          write_trajectory_csv(ctx.out_dir / ("swissroll_snapshots_" + std::string(to_string(spec.kind)) + ".csv"),
                               b, ctx);
          res.snapshots_written += b.states.size();
          expected_snapshots += 1 + cfg.n_steps / cfg.save_every + (cfg.n_steps % cfg.save_every ? 1 : 0);
        }
      } catch (const IntegrationDiverged&) {
        row.diverged = true;
        row.w2 = std::numeric_limits<double>::quiet_NaN();
      }
      by_family[spec.kind].push_back(row.w2);
      res.rows.push_back(row);
    }
  }
  for (const auto& spec : p.specs) {
    const auto other = partner(spec.kind);
    if (!other || !by_family.count(*other)) continue;
    const auto& a = by_family[spec.kind];
    const auto& b = by_family[*other];
    const double pv = paired_t_pvalue_less(a, b);
    const MeanSe ma = mean_se(a), mb = mean_se(b);
    res.checks.push_back({"swissroll " + std::string(to_string(spec.kind)) + " < " + std::string(to_string(*other)) +
                              " (paired one-sided t, alpha " + fmt(p.alpha) + ")",
                          pv < p.alpha,
                          fmt(ma.mean) + " +- " + fmt(ma.se) + " vs " + fmt(mb.mean) + " +- " + fmt(mb.se) +
                              ", p = " + fmt(pv)});
  }
  if (ctx.save_every > 0 && !ctx.out_dir.empty())
    res.checks.push_back({"swissroll snapshot count matches save points", res.snapshots_written == expected_snapshots,
                          std::to_string(res.snapshots_written) + " saved, " + std::to_string(expected_snapshots) +
                              " expected"});
  if (!ctx.out_dir.empty()) {
    CsvWriter w(ctx.out_dir / "swissroll.csv", provenance(ctx, p.seeds), {"family", "seed", "w2", "diverged"});
    for (const auto& r : res.rows) {
      w.cell(to_string(r.family)).cell(r.seed).cell(r.w2).cell(r.diverged ? "1" : "0");
      w.end_row();
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Coupled contraction

ContractionParams ContractionParams::defaults() {
  ContractionParams p;
  for (Family f : {Family::COU, Family::CVP, Family::CSubVP, Family::OU, Family::VP})
    p.specs.push_back(DiffusionSpec::defaults(f, 1));
  return p;
}

std::vector<CheckLine> run_contraction(const ContractionParams& p, const RunContext& ctx) {
  std::vector<CheckLine> lines;
  std::optional<CsvWriter> trace, summary;
  if (!ctx.out_dir.empty()) {
    trace.emplace(ctx.out_dir / "contraction.csv", provenance(ctx, {p.seed}),
                  std::vector<std::string>{"family", "step", "t", "rms"});
    summary.emplace(ctx.out_dir / "contraction_rates.csv", provenance(ctx, {p.seed}),
                    std::vector<std::string>{"family", "window_begin", "window_end", "rate", "L", "margin", "cdpm"});
  }
  for (const auto& spec : p.specs) {
    spec.validate();
    const MixtureTarget target = MixtureTarget::gaussian(std::vector<double>(spec.dim, p.target_mean), p.target_var);
    ReverseProcess proc = make_reverse_process(spec, exact_score_field(spec, target), p.t_eps_fraction);
    const PriorSpec pr = prior(spec);
    const MixtureTarget init = MixtureTarget::gaussian(pr.mean, pr.variance);
    const Samples x = init.sample(p.n_paths, derive_seed(p.seed, 1));
    const Samples y = init.sample(p.n_paths, derive_seed(p.seed, 2));
    SamplerConfig cfg;
    cfg.n_steps = p.n_steps;
    cfg.n_paths = p.n_paths;
    cfg.seed = p.seed;
    cfg.threads = ctx.threads;
    const double L = sup_lipschitz(spec, target);
    const ContractionProfile prof = contraction_profile(spec, ContractionQuery{L, 0.0, L});
    const double margin = *prof.alpha;
    const CouplingWindow window = prof.is_cdpm ? CouplingWindow{0.0, 1.0} : CouplingWindow{0.0, p.early_window};
    const DecayRecord rec = coupled_contraction(proc, cfg, x, y, window);
    const std::string name(to_string(spec.kind));
    if (prof.is_cdpm) {
      bool ok = rec.fitted && rec.rate < 0.0;
      if (margin > 0.0) ok = ok && std::abs(rec.rate) >= 0.5 * margin;
      lines.push_back({"contraction " + name + " rate < 0 and |rate| >= margin/2", ok,
                       "rate " + fmt(rec.rate) + ", margin " + fmt(margin) + ", L " + fmt(L)});
      // Envelope r_k <= r_0 exp(-beta t_k) with beta = min(r_b - L sigma^2).
      if (margin > 0.0) {
        bool env = true;
        for (std::size_t k = 0; k < rec.times.size(); ++k)
          if (rec.rms[k] > rec.rms[0] * std::exp(-margin * rec.times[k]) * (1.0 + 1e-9)) env = false;
        lines.push_back({"contraction " + name + " stays under exp(-beta t) envelope", env, "beta " + fmt(margin)});
      }
    } else {
      const bool ok = rec.fitted && rec.rate >= -0.01;
      lines.push_back({"contraction " + name + " early-window rate >= -0.01", ok,
                       "rate " + fmt(rec.rate) + " over first " + fmt(p.early_window) + " of the horizon"});
    }
    if (trace) {
      const std::size_t thin = ctx.save_every > 0 ? ctx.save_every : 10;
      for (std::size_t k = 0; k < rec.times.size(); ++k) {
        if (k % thin != 0 && k + 1 != rec.times.size()) continue;
        trace->cell(name).cell(static_cast<std::uint64_t>(k)).cell(rec.times[k]).cell(rec.rms[k]);
        trace->end_row();
      }
      summary->cell(name).cell(window.begin).cell(window.end).cell(rec.rate).cell(L).cell(margin)
          .cell(prof.is_cdpm ? "1" : "0");
      summary->end_row();
    }
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Discretisation order

OrderParams OrderParams::defaults() {
  OrderParams p;
  p.spec = DiffusionSpec::defaults(Family::COU, 1);
  p.seeds = first_seeds(20);
  return p;
}

std::vector<CheckLine> run_order(const OrderParams& p, const RunContext& ctx) {
  if (p.step_counts.size() < 3) throw ConfigError("order study needs at least 3 step counts");
  const MixtureTarget target = MixtureTarget::point_mass(std::vector<double>(p.spec.dim, p.x0));
  ReverseProcess proc = make_reverse_process(p.spec, exact_score_field(p.spec, target), p.t_eps_fraction);
  std::vector<std::size_t> counts = p.step_counts;
  const std::size_t ref = *std::max_element(counts.begin(), counts.end()) * p.reference_factor;
  counts.push_back(ref);
  const std::size_t levels = p.step_counts.size();
  std::vector<std::vector<double>> w2(levels), strong(levels);
  for (std::uint64_t seed : p.seeds) {
    SamplerConfig cfg;
    cfg.n_paths = p.n_paths;
    cfg.seed = seed;
    cfg.threads = ctx.threads;
    const auto finals = sample_em_nested(proc, cfg, counts);
    const Samples& reference = finals.back();
    for (std::size_t l = 0; l < levels; ++l) {
      w2[l].push_back(w2_auto(finals[l], reference).value);
      double s = 0.0;
      for (std::size_t i = 0; i < reference.data.size(); ++i) {
        const double diff = finals[l].data[i] - reference.data[i];
        s += diff * diff;
      }
      strong[l].push_back(std::sqrt(s / static_cast<double>(reference.n)));
    }
  }
  std::vector<std::pair<double, double>> pts, spts;
  std::vector<MeanSe> mw(levels), ms(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    const double delta = proc.horizon() / static_cast<double>(p.step_counts[l]);
    mw[l] = mean_se(w2[l]);
    ms[l] = mean_se(strong[l]);
    pts.emplace_back(delta, mw[l].mean);
    spts.emplace_back(delta, ms[l].mean);
  }
  const OrderFit fit = discretization_order(pts);
  const OrderFit sfit = discretization_order(spts);
  std::vector<CheckLine> lines;
  lines.push_back({"order W2 slope in [" + fmt(p.slope_lo) + ", " + fmt(p.slope_hi) + "]",
                   fit.slope >= p.slope_lo && fit.slope <= p.slope_hi,
                   "slope " + fmt(fit.slope) + ", max residual " + fmt(fit.max_abs_residual) +
                       (fit.warning.empty() ? "" : ", " + fit.warning)});
  lines.push_back({"order strong-error slope", true, "slope " + fmt(sfit.slope), true});
  if (!ctx.out_dir.empty()) {
    CsvWriter w(ctx.out_dir / "order.csv", provenance(ctx, p.seeds),
                {"n_steps", "delta", "w2_mean", "w2_se", "strong_mean", "strong_se", "reference_steps"});
    for (std::size_t l = 0; l < levels; ++l) {
      w.cell(static_cast<std::uint64_t>(p.step_counts[l])).cell(pts[l].first).cell(mw[l].mean).cell(mw[l].se)
          .cell(ms[l].mean).cell(ms[l].se).cell(static_cast<std::uint64_t>(ref));
      w.end_row();
    }
  }
  return lines;
}

}  // namespace cdpm
