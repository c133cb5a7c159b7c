#include "cdpm/reverse_sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

#include "cdpm/errors.hpp"
#include "cdpm/parallel.hpp"
#include "cdpm/rng.hpp"

namespace cdpm {

namespace {

double mu_of(const DiffusionSpec& spec, std::size_t j) { return spec.mu_at(j); }

Samples initial_states(const ReverseProcess& proc, const SamplerConfig& cfg) {
  if (const auto* pts = std::get_if<Samples>(&proc.init)) {
    if (pts->d != proc.spec.dim) throw UsageError("initial samples have the wrong dimension");
    return *pts;
  }
  const auto& pr = std::get<PriorSpec>(proc.init);
  const std::size_t d = proc.spec.dim;
  Samples x(cfg.n_paths, d);
  const double sd = std::sqrt(pr.variance);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto g = make_stream({cfg.seed, role(StreamRole::Init), i});
      auto r = x.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] = pr.mean[j] + sd * standard_normal(g);
    }
  });
  return x;
}

// Owns per-path noise streams and advances a batch one backward step at a time.
class BackwardIntegrator {
 public:
  BackwardIntegrator(const ReverseProcess& proc, const SamplerConfig& cfg, std::size_t n_paths)
      : proc_(proc), cfg_(cfg), n_(n_paths), d_(proc.spec.dim) {
    delta_ = proc.horizon() / static_cast<double>(cfg.n_steps);
    predictor_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) predictor_.push_back(make_stream({cfg.seed, role(StreamRole::Predictor), i}));
    if (cfg.method == Method::PC) {
      corrector_.reserve(n_);
      for (std::size_t i = 0; i < n_; ++i)
        corrector_.push_back(make_stream({cfg.seed, role(StreamRole::Corrector), i}));
      score_buf_.resize(n_ * d_);
      noise_buf_.resize(n_ * d_);
      s_norm_.resize(n_);
      z_norm_.resize(n_);
    }
  }

  double delta() const { return delta_; }

  // Predictor step k (1-based): coefficients at physical time T - t_{k-1}.
  void predict(std::size_t k, Samples& x) {
    const DiffusionSpec& spec = proc_.spec;
    const double tau = spec.T - static_cast<double>(k - 1) * delta_;
    const double b = drift_factor(spec, tau);
    const double s2 = diffusion_sq(spec, tau);
    const double noise_scale = cfg_.brownian ? std::sqrt(s2 * delta_) : 0.0;
    std::atomic<bool> bad{false};
    parallel_for(n_, cfg_.threads, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> s(d_);
      for (std::size_t i = lo; i < hi; ++i) {
        auto r = x.row(i);
        proc_.score.eval(tau, r, s, EvalKey{i, k - 1, 0});
        auto& g = predictor_[i];
        for (std::size_t j = 0; j < d_; ++j) {
          const double z = standard_normal(g);
          r[j] += (-b * (r[j] - mu_of(spec, j)) + s2 * s[j]) * delta_ + noise_scale * z;
          if (!std::isfinite(r[j])) bad = true;
        }
      }
    });
    if (bad) throw IntegrationDiverged(k, "non-finite state after predictor step");
  }

  // Langevin corrector sweeps at physical time tau; `step` keys the score noise.
  void correct(std::size_t step, double tau, Samples& x, std::size_t sweeps, double snr) {
    if (sweeps == 0) return;
    if (corrector_.empty()) {
      corrector_.reserve(n_);
      for (std::size_t i = 0; i < n_; ++i)
        corrector_.push_back(make_stream({cfg_.seed, role(StreamRole::Corrector), i}));
      score_buf_.resize(n_ * d_);
      noise_buf_.resize(n_ * d_);
      s_norm_.resize(n_);
      z_norm_.resize(n_);
    }
    for (std::size_t j = 0; j < sweeps; ++j) {
      parallel_for(n_, cfg_.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          std::span<double> s(score_buf_.data() + i * d_, d_);
          std::span<double> z(noise_buf_.data() + i * d_, d_);
          proc_.score.eval(tau, x.row(i), s, EvalKey{i, step, 1 + j});
          fill_standard_normal(corrector_[i], z);
          s_norm_[i] = std::sqrt(std::inner_product(s.begin(), s.end(), s.begin(), 0.0));
          z_norm_[i] = std::sqrt(std::inner_product(z.begin(), z.end(), z.begin(), 0.0));
        }
      });
      double batch_eps = 0.0;
      if (cfg_.corrector_norm == CorrectorNorm::BatchMean) {
        // Sequential reduction keeps the result independent of the worker count.
        double sn = 0.0, zn = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          sn += s_norm_[i];
          zn += z_norm_[i];
        }
        if (sn > 0.0) {
          const double ratio = snr * zn / sn;
          batch_eps = 2.0 * ratio * ratio;
        }
      }
      std::atomic<bool> bad{false};
      parallel_for(n_, cfg_.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          double eps = batch_eps;
          if (cfg_.corrector_norm == CorrectorNorm::PerPath) {
            if (s_norm_[i] == 0.0) continue;
            const double ratio = snr * z_norm_[i] / s_norm_[i];
            eps = 2.0 * ratio * ratio;
          }
          const double noise = std::sqrt(2.0 * eps);
          auto r = x.row(i);
          for (std::size_t c = 0; c < d_; ++c) {
            r[c] += eps * score_buf_[i * d_ + c] + noise * noise_buf_[i * d_ + c];
            if (!std::isfinite(r[c])) bad = true;
          }
        }
      });
      if (bad) throw IntegrationDiverged(step, "non-finite state after corrector sweep");
    }
  }

  void step(std::size_t k, Samples& x) {
    predict(k, x);
    if (cfg_.method == Method::PC) {
      const double tau = proc_.spec.T - static_cast<double>(k) * delta_;
      correct(k - 1, tau, x, cfg_.corrector_steps, cfg_.snr);
    }
  }

 private:
  const ReverseProcess& proc_;
  const SamplerConfig& cfg_;
  std::size_t n_;
  std::size_t d_;
  double delta_ = 0.0;
  std::vector<Xoshiro256pp> predictor_;
  std::vector<Xoshiro256pp> corrector_;
  std::vector<double> score_buf_, noise_buf_, s_norm_, z_norm_;
};

TrajectoryBatch run_backward(const ReverseProcess& proc, const SamplerConfig& cfg) {
  proc.spec.validate();
  cfg.validate();
  if (proc.score.dim() != proc.spec.dim) throw ConfigError("score dimension does not match SDE dimension");
  if (!(proc.t_eps_fraction > 0.0 && proc.t_eps_fraction < 1.0))
    throw ConfigError("t_eps fraction must lie in (0, 1)");
  Samples x = initial_states(proc, cfg);
  BackwardIntegrator integ(proc, cfg, x.n);
  TrajectoryBatch out;
  out.seed = cfg.seed;
  out.t_cutoff = proc.t_eps();
  out.times.push_back(0.0);
  out.steps.push_back(0);
  out.states.push_back(x);
  for (std::size_t k = 1; k <= cfg.n_steps; ++k) {
    integ.step(k, x);
    const bool last = k == cfg.n_steps;
    if (last || (cfg.save_every > 0 && k % cfg.save_every == 0)) {
      out.times.push_back(last ? proc.horizon() : static_cast<double>(k) * integ.delta());
      out.steps.push_back(k);
      out.states.push_back(x);
    }
  }
  return out;
}

}  // namespace

ReverseProcess make_reverse_process(const DiffusionSpec& spec, ScoreField score, double t_eps_fraction) {
  ReverseProcess p{spec, std::move(score), prior(spec), t_eps_fraction};
  return p;
}

Method parse_method(std::string_view name) {
  std::string key;
  for (char c : name) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "em") return Method::EM;
  if (key == "pc") return Method::PC;
  throw ConfigError("unknown sampler method '" + std::string(name) + "'");
}

void SamplerConfig::validate() const {
  if (n_steps == 0) throw ConfigError("sampler needs n_steps >= 1");
  if (n_paths == 0) throw ConfigError("sampler needs n_paths >= 1");
  if (!(snr >= 0.0)) throw ConfigError("snr must be nonnegative");
  if (method == Method::PC && corrector_steps == 0) throw ConfigError("predictor-corrector needs corrector_steps >= 1");
}

std::vector<double> reverse_drift(const ReverseProcess& proc, double t, std::span<const double> x, const EvalKey& key) {
  const DiffusionSpec& spec = proc.spec;
  if (!(t >= 0.0 && t <= proc.horizon() * (1.0 + 1e-12))) throw DomainError("backward time outside [0, T - t_eps]");
  const double tau = spec.T - t;
  const double b = drift_factor(spec, tau);
  const double s2 = diffusion_sq(spec, tau);
  std::vector<double> s(x.size());
  proc.score.eval(tau, x, s, key);
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = -b * (x[j] - spec.mu_at(j)) + s2 * s[j];
  return out;
}

TrajectoryBatch sample_em(const ReverseProcess& proc, const SamplerConfig& cfg) {
  SamplerConfig c = cfg;
  c.method = Method::EM;
  return run_backward(proc, c);
}

TrajectoryBatch sample_pc(const ReverseProcess& proc, const SamplerConfig& cfg) {
  SamplerConfig c = cfg;
  c.method = Method::PC;
  return run_backward(proc, c);
}

TrajectoryBatch sample(const ReverseProcess& proc, const SamplerConfig& cfg) { return run_backward(proc, cfg); }

Samples langevin_correct(const ScoreField& score, double physical_t, Samples x, std::size_t steps, double snr,
                         std::uint64_t seed, CorrectorNorm rule) {
  DiffusionSpec dummy = DiffusionSpec::defaults(Family::OU, x.d);
  ReverseProcess proc{dummy, score, PriorSpec{}, 1e-3};
  SamplerConfig cfg;
  cfg.method = Method::PC;
  cfg.seed = seed;
  cfg.n_paths = x.n;
  cfg.corrector_norm = rule;
  BackwardIntegrator integ(proc, cfg, x.n);
  for (std::size_t k = 0; k < steps; ++k) integ.correct(k, physical_t, x, 1, snr);
  return x;
}

std::vector<Samples> simulate_forward_em(const DiffusionSpec& spec, const Samples& start, double dt,
                                         const std::vector<double>& checkpoints, std::uint64_t seed,
                                         std::size_t threads) {
  spec.validate();
  if (start.d != spec.dim) throw UsageError("start points have the wrong dimension");
  if (!(dt > 0.0)) throw ConfigError("forward EM needs dt > 0");
  std::vector<std::size_t> marks;
  for (double c : checkpoints) {
    check_time(spec, c);
    const auto k = static_cast<std::size_t>(std::llround(c / dt));
    if (!marks.empty() && k < marks.back()) throw UsageError("checkpoints must be increasing");
    marks.push_back(k);
  }
  const std::size_t total = marks.empty() ? 0 : marks.back();
  // Per-step coefficients; the last step may overshoot T by rounding only.
  std::vector<double> a(total), c(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double t = std::min(spec.T, static_cast<double>(k) * dt);
    a[k] = drift_factor(spec, t) * dt;
    c[k] = std::sqrt(diffusion_sq(spec, t) * dt);
  }
  const std::size_t n = start.n, d = start.d;
  std::vector<Samples> out(marks.size(), Samples(n, d));
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t blk_lo, std::size_t blk_hi) {
  for (std::size_t blk = blk_lo; blk < blk_hi; ++blk) {
    const std::size_t lo = blk * kBlock, hi = std::min(n, lo + kBlock);
    std::vector<double> x(start.data.begin() + static_cast<std::ptrdiff_t>(lo * d),
                          start.data.begin() + static_cast<std::ptrdiff_t>(hi * d));
    std::vector<Xoshiro256pp> gens;
    gens.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) gens.push_back(make_stream({seed, role(StreamRole::Kernel), i}));
    std::size_t next = 0;
    auto save = [&](std::size_t k) {
      while (next < marks.size() && marks[next] == k) {
        std::copy(x.begin(), x.end(), out[next].data.begin() + static_cast<std::ptrdiff_t>(lo * d));
        ++next;
      }
    };
    save(0);
    for (std::size_t k = 0; k < total; ++k) {
      const double ak = a[k], ck = c[k];
      for (std::size_t i = 0; i < hi - lo; ++i) {
        auto& g = gens[i];
        for (std::size_t j = 0; j < d; ++j) {
          double& v = x[i * d + j];
          v += ak * (v - spec.mu_at(j)) + ck * standard_normal(g);
        }
      }
      save(k + 1);
    }
  }
  });
  return out;
}

std::vector<Samples> sample_em_nested(const ReverseProcess& proc, const SamplerConfig& cfg,
                                      const std::vector<std::size_t>& step_counts) {
  proc.spec.validate();
  cfg.validate();
  if (step_counts.empty()) throw UsageError("nested EM needs at least one step count");
  const std::size_t fine = *std::max_element(step_counts.begin(), step_counts.end());
  for (std::size_t c : step_counts)
    if (c == 0 || fine % c != 0) throw UsageError("nested EM step counts must divide the largest count");
  const DiffusionSpec& spec = proc.spec;
  const std::size_t d = spec.dim, levels = step_counts.size();
  const double horizon = proc.horizon();
  const double fine_delta = horizon / static_cast<double>(fine);
  Samples init = initial_states(proc, cfg);
  std::vector<Samples> out(levels, Samples(init.n, d));

  // Coefficients per level and coarse step, evaluated at the left endpoint.
  std::vector<std::vector<double>> b(levels), s2(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    const double delta = horizon / static_cast<double>(step_counts[l]);
    for (std::size_t k = 0; k < step_counts[l]; ++k) {
      const double tau = spec.T - static_cast<double>(k) * delta;
      b[l].push_back(drift_factor(spec, tau));
      s2[l].push_back(diffusion_sq(spec, tau));
    }
  }
  std::atomic<bool> bad{false};
  parallel_for(init.n, cfg.threads, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> x(levels * d), dw(levels * d), z(d), s(d);
    for (std::size_t i = lo; i < hi; ++i) {
      auto g = make_stream({cfg.seed, role(StreamRole::Predictor), i});
      for (std::size_t l = 0; l < levels; ++l) std::copy_n(init.row(i).begin(), d, x.begin() + l * d);
      std::fill(dw.begin(), dw.end(), 0.0);
      const double sq = cfg.brownian ? std::sqrt(fine_delta) : 0.0;
      for (std::size_t k = 0; k < fine; ++k) {
        for (std::size_t j = 0; j < d; ++j) z[j] = sq * standard_normal(g);
        for (std::size_t l = 0; l < levels; ++l) {
          for (std::size_t j = 0; j < d; ++j) dw[l * d + j] += z[j];
          const std::size_t ratio = fine / step_counts[l];
          if ((k + 1) % ratio != 0) continue;
          const std::size_t ck = k / ratio;
          const double delta = horizon / static_cast<double>(step_counts[l]);
          const double tau = spec.T - static_cast<double>(ck) * delta;
          std::span<double> xl(x.data() + l * d, d);
          proc.score.eval(tau, xl, s, EvalKey{i, ck, 0});
          const double sd = std::sqrt(s2[l][ck]);
          for (std::size_t j = 0; j < d; ++j) {
            xl[j] += (-b[l][ck] * (xl[j] - spec.mu_at(j)) + s2[l][ck] * s[j]) * delta + sd * dw[l * d + j];
            dw[l * d + j] = 0.0;
            if (!std::isfinite(xl[j])) bad = true;
          }
        }
      }
      for (std::size_t l = 0; l < levels; ++l) std::copy_n(x.begin() + l * d, d, out[l].row(i).begin());
    }
  });
  if (bad) throw IntegrationDiverged(fine, "non-finite state in nested EM");
  return out;
}

Samples sample_forward(const DiffusionSpec& spec, const MixtureTarget& target, double t, std::size_t n,
                       std::uint64_t seed, ForwardMode mode, double dt) {
  spec.validate();
  target.validate();
  check_time(spec, t);
  if (target.dim() != spec.dim) throw ConfigError("target dimension does not match SDE dimension");
  Samples x0 = target.sample(n, seed);
  if (t == 0.0) return x0;
  if (mode == ForwardMode::EM) {
    const auto steps = std::max<long long>(1, std::llround(t / dt));
    const double h = t / static_cast<double>(steps);
    return simulate_forward_em(spec, x0, h, {t}, seed).front();
  }
  const PerturbationKernel k = kernel(spec, t);
  Samples x(n, spec.dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = make_stream({seed, role(StreamRole::Kernel), i});
    auto r = x.row(i);
    auto r0 = x0.row(i);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double m = spec.mu_at(j);
      r[j] = m + k.mean_factor * (r0[j] - m) + k.cond_std * standard_normal(g);
    }
  }
  return x;
}

std::optional<std::pair<double, double>> fit_log_rate(std::span<const double> times, std::span<const double> values) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < times.size() && i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) continue;
    const double y = std::log(values[i]);
    sx += times[i];
    sy += y;
    sxx += times[i] * times[i];
    sxy += times[i] * y;
    ++m;
  }
  if (m < 2) return std::nullopt;
  const double mm = static_cast<double>(m);
  const double den = mm * sxx - sx * sx;
  if (den == 0.0) return std::nullopt;
  const double slope = (mm * sxy - sx * sy) / den;
  return std::make_pair(slope, (sy - slope * sx) / mm);
}

DecayRecord coupled_contraction(const ReverseProcess& proc, const SamplerConfig& cfg, const Samples& init_x,
                                const Samples& init_y, CouplingWindow window) {
  proc.spec.validate();
  cfg.validate();
  if (init_x.n != init_y.n || init_x.d != init_y.d) throw UsageError("coupled batches must have equal shapes");
  if (init_x.d != proc.spec.dim) throw UsageError("initial batches have the wrong dimension");
  Samples x = init_x, y = init_y;
  BackwardIntegrator ix(proc, cfg, x.n), iy(proc, cfg, y.n);
  DecayRecord rec;
  auto rms = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double diff = x.data[i] - y.data[i];
      acc += diff * diff;
    }
    return std::sqrt(acc / static_cast<double>(x.n));
  };
  rec.times.push_back(0.0);
  rec.rms.push_back(rms());
  for (std::size_t k = 1; k <= cfg.n_steps; ++k) {
    ix.step(k, x);
    iy.step(k, y);
    rec.times.push_back(static_cast<double>(k) * ix.delta());
    rec.rms.push_back(rms());
  }
  const double t0 = window.begin * proc.horizon(), t1 = window.end * proc.horizon();
  std::vector<double> ft, fv;
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    if (rec.times[i] < t0 - 1e-12 || rec.times[i] > t1 + 1e-12) continue;
    ft.push_back(rec.times[i]);
    fv.push_back(rec.rms[i]);
  }
  if (auto fit = fit_log_rate(ft, fv)) {
    rec.rate = fit->first;
    rec.intercept = fit->second;
    rec.fitted = true;
  }
  return rec;
}

}  // namespace cdpm
