// Command-line driver for the diffusion experiments.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdpm/config.hpp"
#include "cdpm/csv.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/experiments.hpp"
#include "cdpm/wasserstein.hpp"

namespace {

using namespace cdpm;

std::vector<DiffusionSpec> specs_for(const ExperimentConfig& cfg, const std::vector<Family>& def_families,
                                     std::size_t dim) {
  std::vector<DiffusionSpec> out;
  for (Family f : cfg.families(def_families)) {
    DiffusionSpec base = DiffusionSpec::defaults(f, dim);
    DiffusionSpec s = cfg.sde(base);
    s.kind = f;
    s.validate();
    out.push_back(s);
  }
  return out;
}

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

int report(const std::vector<CheckLine>& lines, const RunContext& ctx, const std::string& stem,
           const std::vector<std::uint64_t>& seeds) {
  for (const auto& l : lines) std::cout << format_check(l) << '\n';
  write_summary(ctx, stem, lines, seeds);
  const bool ok = all_pass(lines);
  std::cout << (ok ? "ALL CHECKS PASSED" : "SOME CHECKS FAILED") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contractive diffusion model experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t threads = 0;
  std::optional<std::size_t> save_every;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base seed (sets sweep.seed)");
  app.add_option("--out", out_dir, "output directory for CSV artifacts");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)");
  app.add_option("--save-every", save_every, "keep every K-th sampler step in trajectory exports");
  app.add_option("--set", overrides, "override a config key: section.key=value")->take_all();

  auto* kernel_cmd = app.add_subcommand("kernel-check", "forward EM vs closed-form perturbation kernels");
  auto* compare_cmd = app.add_subcommand("compare", "W2 of OU-type samplers under injected score error");
  auto* swiss_cmd = app.add_subcommand("swissroll", "Swiss Roll sampling with the empirical-mixture score");
  auto* transform_cmd = app.add_subcommand("transform-check", "VE to CSubVP change of variables");
  auto* bounds_cmd = app.add_subcommand("bounds", "sampling-error bounds vs measured W2");
  auto* contraction_cmd = app.add_subcommand("contraction", "coupled backward paths");
  auto* order_cmd = app.add_subcommand("order", "EM discretisation order");
  auto* w2_cmd = app.add_subcommand("w2", "W2 between two point files, or the estimator self-checks");
  std::string file_a, file_b, method = "auto";
  double reg = 0.0;
  std::size_t first_col = 0;
  w2_cmd->add_option("--a", file_a, "first point file (CSV)");
  w2_cmd->add_option("--b", file_b, "second point file (CSV)");
  w2_cmd->add_option("--method", method, "auto | sorted1d | assignment | sinkhorn");
  w2_cmd->add_option("--reg", reg, "Sinkhorn regularisation in cost units (default 1e-2)");
  w2_cmd->add_option("--first-column", first_col, "index of the first coordinate column");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.set("sweep.seed", std::to_string(*seed));
    if (save_every) cfg.set("sampler.save_every", std::to_string(*save_every));
    if (threads > 0) cfg.set("sampler.threads", std::to_string(threads));
    if (!out_dir.empty()) cfg.set("output.dir", out_dir);

    RunContext ctx;
    ctx.out_dir = cfg.get_string("output.dir", "out");
    ctx.config_hash = cfg.hash();
    ctx.threads = cfg.get_u64("sampler.threads", 1);
    ctx.save_every = cfg.get_u64("sampler.save_every", 0);
    const std::uint64_t base_seed = cfg.get_u64("sweep.seed", 0);
    const auto* sub = app.get_subcommands().front();
    ctx.command = sub->get_name();

    if (sub == kernel_cmd) {
      KernelCheckParams p = KernelCheckParams::defaults();
      p.specs = specs_for(cfg, {std::begin(kAllFamilies), std::end(kAllFamilies)}, 1);
      p.n_paths = cfg.get_u64("sampler.n_paths", p.n_paths);
      p.x0 = cfg.get_doubles("target.x0", {p.x0}).front();
      p.seed = base_seed;
      return report(run_kernel_check(p, ctx), ctx, "kernel_check", {p.seed});
    }
    if (sub == compare_cmd) {
      CompareParams p = CompareParams::defaults();
      p.specs = specs_for(cfg, {Family::OU, Family::COU}, 1);
      p.epsilons = cfg.get_doubles("sweep.epsilon", p.epsilons);
      p.dts = cfg.get_doubles("sweep.delta", p.dts);
      p.seeds = cfg.seeds(base_seed, p.seeds.size());
      p.n_paths = cfg.get_u64("sampler.n_paths", p.n_paths);
      p.x0 = cfg.get_doubles("target.x0", {p.x0}).front();
      p.t_eps_fraction = cfg.get_double("sampler.t_eps_fraction", p.t_eps_fraction);
      p.mode = cfg.noise(NoiseModel{p.mode, 0.0, 0}).mode;
      const auto res = run_compare(p, ctx);
      return report(res.checks, ctx, "compare", p.seeds);
    }
    if (sub == swiss_cmd) {
      SwissrollParams p = SwissrollParams::defaults();
      if (cfg.has("sde.families") || cfg.has("sde.family")) {
        p.specs.clear();
        for (Family f : cfg.families({cfg.sde(DiffusionSpec{}).kind})) {
          DiffusionSpec base = DiffusionSpec::defaults(f, 2);
          if (base.is_beta_family()) {
            base.beta_min = 0.01;
            base.beta_max = 8.0;
            base.T = 1.0;
          }
          DiffusionSpec s = cfg.sde(base);
          s.kind = f;
          s.dim = 2;
          p.specs.push_back(s);
        }
      }
      p.data = cfg.dataset(p.data);
      p.n_eval = cfg.get_u64("metric.n", p.n_eval);
      p.seeds = cfg.seeds(base_seed, p.seeds.size());
      const NoiseModel nm = cfg.noise(NoiseModel{p.mode, p.epsilon, 0});
      p.mode = nm.mode;
      p.epsilon = nm.epsilon;
      p.sampler = cfg.sampler(p.sampler);
      p.t_eps_fraction = cfg.get_double("sampler.t_eps_fraction", p.t_eps_fraction);
      const auto res = run_swissroll(p, ctx);
      return report(res.checks, ctx, "swissroll", p.seeds);
    }
    if (sub == transform_cmd) {
      TransformParams p = TransformParams::defaults();
      DiffusionSpec ve = cfg.sde(p.ve);
      ve.kind = Family::VE;
      ve.T = p.ve.T;
      DiffusionSpec c = cfg.sde(p.c);
      c.kind = Family::CSubVP;
      p.ve = ve;
      p.c = c;
      p.target_mean = cfg.get_doubles("target.mean", {p.target_mean}).front();
      p.target_var = cfg.get_double("target.var", p.target_var);
      return report(run_transform_check(p, ctx), ctx, "transform", {});
    }
    if (sub == bounds_cmd) {
      BoundsParams p = BoundsParams::defaults();
      p.cou = cfg.sde(p.cou);
      p.cou.kind = Family::COU;
      if (cfg.has("sde.family")) p.cou.kind = parse_family(cfg.get_string("sde.family", "COU"));
      DiffusionSpec cvp = cfg.sde(p.cvp);
      cvp.kind = Family::CVP;
      p.cvp = cvp;
      p.epsilons = cfg.get_doubles("sweep.epsilon", p.epsilons);
      p.seeds = cfg.seeds(base_seed, p.seeds.size());
      p.n_paths = cfg.get_u64("sampler.n_paths", p.n_paths);
      p.n_steps = cfg.get_u64("sampler.n_steps", p.n_steps);
      p.kappa = cfg.get_double("bounds.kappa", p.kappa);
      p.u_grid = cfg.get_u64("bounds.grid", p.u_grid);
      if (cfg.has("bounds.eta")) p.eta = cfg.get_double("bounds.eta", 0.0);
      if (cfg.has("bounds.L")) p.L = cfg.get_double("bounds.L", 0.0);
      if (cfg.has("bounds.h")) p.h = cfg.get_double("bounds.h", 0.1);
      if (cfg.has("bounds.second_moment")) p.second_moment = cfg.get_double("bounds.second_moment", 0.0);
      p.empirical = cfg.get_bool("bounds.empirical", p.empirical);
      p.mode = cfg.noise(NoiseModel{p.mode, 0.0, 0}).mode;
      return report(run_bounds(p, ctx), ctx, "bounds", p.seeds);
    }
    if (sub == contraction_cmd) {
      ContractionParams p = ContractionParams::defaults();
      p.specs = specs_for(cfg, {Family::COU, Family::CVP, Family::CSubVP, Family::OU, Family::VP}, 1);
      p.target_mean = cfg.get_doubles("target.mean", {p.target_mean}).front();
      p.target_var = cfg.get_double("target.var", p.target_var);
      p.n_paths = cfg.get_u64("sampler.n_paths", p.n_paths);
      p.n_steps = cfg.get_u64("sampler.n_steps", p.n_steps);
      p.seed = base_seed;
      return report(run_contraction(p, ctx), ctx, "contraction", {p.seed});
    }
    if (sub == order_cmd) {
      OrderParams p = OrderParams::defaults();
      p.spec = cfg.sde(p.spec);
      p.seeds = cfg.seeds(base_seed, p.seeds.size());
      p.n_paths = cfg.get_u64("sampler.n_paths", p.n_paths);
      p.x0 = cfg.get_doubles("target.x0", {p.x0}).front();
      if (cfg.has("sweep.delta")) {
        p.step_counts.clear();
        const double horizon = p.spec.T * (1.0 - p.t_eps_fraction);
        for (double d : cfg.get_doubles("sweep.delta", {})) p.step_counts.push_back(std::llround(horizon / d));
      }
      return report(run_order(p, ctx), ctx, "order", p.seeds);
    }
    if (sub == w2_cmd) {
      if (file_a.empty() != file_b.empty()) throw UsageError("w2 needs both --a and --b, or neither");
      if (!file_a.empty()) {
        const Samples a = read_points_csv(file_a, first_col);
        const Samples b = read_points_csv(file_b, first_col);
        if (method == "auto") method = cfg.get_string("metric.method", "auto");
        if (!(reg > 0.0)) reg = cfg.get_double("metric.reg", 0.0);
        SinkhornOptions opt;
        W2Estimator est;
        if (method == "auto") {
          est = [](const Samples& x, const Samples& y) { return w2_auto(x, y); };
        } else {
          switch (parse_w2_method(method)) {
            case W2Method::Sorted1D: est = w2_sorted_1d; break;
            case W2Method::Assignment: est = w2_assignment; break;
            case W2Method::Sinkhorn:
              if (reg > 0.0) opt.reg = reg;
              est = [opt](const Samples& x, const Samples& y) { return w2_sinkhorn(x, y, opt); };
              break;
            default: throw UsageError("the closed-form method needs Gaussian parameters, not point files");
          }
        }
        const W2Report r = est(a, b);
        std::cout << "w2," << to_string(r.method) << ',' << r.n << ',' << format_double(r.value);
        if (const auto reps = cfg.get_u64("metric.bootstrap", 0); reps > 0)
          std::cout << ",se=" << format_double(bootstrap_std_error(a, b, est, reps, base_seed));
        std::cout << (r.converged ? "" : ",not_converged") << '\n';
        return 0;
      }
      W2OracleParams wp;
      wp.seed = base_seed;
      auto lines = run_w2_oracle(wp, ctx);
      SinkhornCheckParams sp;
      sp.seed = base_seed;
      for (auto& l : run_sinkhorn_check(sp, ctx)) lines.push_back(l);
      return report(lines, ctx, "w2", {base_seed});
    }
  } catch (const cdpm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
