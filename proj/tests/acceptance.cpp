// Acceptance runner: one PASS/FAIL line per criterion. Usage: acceptance [N ...] [--out DIR]

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "cdpm/experiments.hpp"

using namespace cdpm;

namespace {

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<std::vector<CheckLine>(const RunContext&)> run;
};

std::vector<Criterion> criteria() {
  return {
      {1, "kernel fidelity", 120, [](const RunContext& c) { return run_kernel_check(KernelCheckParams::defaults(), c); }},
      {2, "score-matching gradient equivalence", 60,
       [](const RunContext& c) { return run_score_matching(ScoreMatchingParams::defaults(), c); }},
      {3, "OU vs COU error table", 600, [](const RunContext& c) { return run_compare(CompareParams::defaults(), c).checks; }},
      {4, "contraction sign law", 120,
       [](const RunContext& c) { return run_contraction(ContractionParams::defaults(), c); }},
      {5, "discretisation order", 300, [](const RunContext& c) { return run_order(OrderParams::defaults(), c); }},
      {6, "bound dominance", 300, [](const RunContext& c) { return run_bounds(BoundsParams::defaults(), c); }},
      {7, "VE to CSubVP transform identities", 30,
       [](const RunContext& c) { return run_transform_check(TransformParams::defaults(), c); }},
      {8, "W2 estimator oracle", 60, [](const RunContext& c) { return run_w2_oracle(W2OracleParams{}, c); }},
      {9, "Swiss Roll ordering", 600,
       [](const RunContext& c) { return run_swissroll(SwissrollParams::defaults(), c).checks; }},
  };
}

bool run_one(const Criterion& c, const std::filesystem::path& out) {
  RunContext ctx;
  ctx.command = "acceptance-" + std::to_string(c.id);
  if (!out.empty()) ctx.out_dir = out / ("criterion_" + std::to_string(c.id));
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<CheckLine> lines;
  std::string error;
  try {
    lines = c.run(ctx);
  } catch (const std::exception& e) {
    error = e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& l : lines) std::cout << "  " << format_check(l) << '\n';
  if (!error.empty()) std::cout << "  error: " << error << '\n';
  const bool in_time = secs <= c.budget_s;
  const bool pass = error.empty() && !lines.empty() && all_pass(lines) && in_time;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.title << " (" << secs << " s of "
            << c.budget_s << " s" << (in_time ? "" : ", over budget") << ")" << std::endl;
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  std::filesystem::path out;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      wanted.push_back(std::atoi(a.c_str()));
    }
  }
  bool ok = true;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    ok = run_one(c, out) && ok;
  }
  return ok ? 0 : 1;
}
