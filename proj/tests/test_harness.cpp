#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cdpm/config.hpp"
#include "cdpm/csv.hpp"
#include "cdpm/datasets.hpp"
#include "cdpm/errors.hpp"
#include "cdpm/experiments.hpp"

using namespace cdpm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdpm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CDPM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config parsing") {
    const auto cfg = ExperimentConfig::from_text(
        "[sde]\nfamily = CVP\nbeta_max = 0.4\nT = 5\n[sampler]\nmethod = pc\nsnr = 0.1\nn_steps = 20\n"
        "[sweep]\nepsilon = 0.1, 0.2 0.5\nseeds = 4,5\n");
    const auto spec = cfg.sde(DiffusionSpec::defaults(Family::OU));
    CHECK(spec.kind == Family::CVP);
    CHECK(spec.beta_max == 0.4);
    CHECK(spec.T == 5.0);
    const auto sc = cfg.sampler(SamplerConfig{});
    CHECK(sc.method == Method::PC);
    CHECK(sc.n_steps == 20);
    CHECK(cfg.get_doubles("sweep.epsilon", {}) == std::vector<double>{0.1, 0.2, 0.5});
    CHECK(cfg.seeds(0, 3) == std::vector<std::uint64_t>{4, 5});
    CHECK(ExperimentConfig::from_text("").seeds(7, 3) == std::vector<std::uint64_t>{7, 8, 9});
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(ExperimentConfig::from_text("[sde]\nthetta = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_text("[sde]\ntheta = abc\n").sde(DiffusionSpec{}), ConfigError);
    ExperimentConfig cfg;
    CHECK_THROWS_AS(cfg.set("nosuch.key", "1"), ConfigError);
  }

  TEST_CASE("config hash ignores threads and output location") {
    auto a = ExperimentConfig::from_text("[sde]\ntheta = 0.3\n[sampler]\nthreads = 1\n[output]\ndir = x\n");
    auto b = ExperimentConfig::from_text("[sampler]\nthreads = 8\n[sde]\ntheta = 0.3\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.set("sde.theta", "0.4");
    CHECK(a.hash() != b.hash());
  }

  TEST_CASE("datasets") {
    DatasetSpec pm;
    pm.n = 3;
    CHECK(generate_dataset(pm).data == std::vector<double>{-1.0, -1.0, -1.0});

    DatasetSpec sr;
    sr.kind = DatasetKind::SwissRoll;
    sr.n = 1000;
    sr.seed = 4;
    const auto pts = generate_dataset(sr);
    REQUIRE(pts.d == 2);
    for (std::size_t i = 0; i < pts.n; ++i) {
      const double r = std::hypot(pts.row(i)[0], pts.row(i)[1]);
      CHECK(r >= 1.0 / 3.0 - 1e-12);
      CHECK(r <= 1.0 + 1e-12);
    }
    CHECK(generate_dataset(sr).data == pts.data);
    sr.seed = 5;
    CHECK(generate_dataset(sr).data != pts.data);
    CHECK(parse_dataset_kind(to_string(DatasetKind::SwissRoll)) == DatasetKind::SwissRoll);
  }

  TEST_CASE("CSV provenance and round trip") {
    const auto dir = scratch("csv");
    {
      CsvWriter w(dir / "pts.csv", Provenance{"unit", "00000000deadbeef", {1, 2}}, {"id", "x", "y"});
      w.cell(std::uint64_t{0}).cell(1.5).cell(-2.25);
      w.end_row();
      w.cell(std::uint64_t{1}).cell(0.1).cell(std::nan(""));
      w.end_row();
      w.cell(1.0);
      CHECK_THROWS_AS(w.end_row(), UsageError);
    }
    const std::string text = slurp(dir / "pts.csv");
    CHECK(text.find("# artifact_version: " + std::string(kArtifactVersion)) == 0);
    CHECK(text.find("# config_hash: 00000000deadbeef") != std::string::npos);
    CHECK(text.find("# seeds: 1 2") != std::string::npos);
    CHECK(text.find("\nid,x,y\n") != std::string::npos);
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");

    std::ofstream(dir / "clean.csv") << "# note\nx,y\n1,2\n3,4\n";
    const auto back = read_points_csv(dir / "clean.csv");
    CHECK(back.n == 2);
    CHECK(back.data == std::vector<double>{1, 2, 3, 4});
    CHECK(read_points_csv(dir / "clean.csv", 1).data == std::vector<double>{2, 4});
  }

  TEST_CASE("statistics helpers") {
    const auto m = mean_se({1.0, 2.0, 3.0, std::nan("")});
    CHECK(m.n == 3);
    CHECK(m.mean == doctest::Approx(2.0));
    CHECK(m.se == doctest::Approx(1.0 / std::sqrt(3.0)));
    CHECK(paired_t_pvalue_less({1, 2, 3, 4}, {2, 3.1, 4, 5.2}) < 0.01);
    CHECK(paired_t_pvalue_less({2, 3.1, 4, 5.2}, {1, 2, 3, 4}) > 0.99);
    CHECK(format_check({"x", true, "d", false}) == "PASS x :: d");
    CHECK(format_check({"x", false, "d", true}).rfind("INFO", 0) == 0);
    CHECK(all_pass({{"a", true, "", false}, {"b", false, "", true}}));
    CHECK_FALSE(all_pass({{"a", false, "", false}}));
  }

  TEST_CASE("cli: w2 between point files") {
    const auto dir = scratch("cli_w2");
    std::ofstream(dir / "a.csv") << "x\n0\n1\n2\n";
    std::ofstream(dir / "b.csv") << "x\n1\n2\n3\n";
    CHECK(run_cli("w2 --a " + (dir / "a.csv").string() + " --b " + (dir / "b.csv").string(), dir / "log") == 0);
    CHECK(slurp(dir / "log").find("w2,sorted1d,3,1") != std::string::npos);
  }

  TEST_CASE("cli: errors give exit code 2") {
    const auto dir = scratch("cli_err");
    CHECK(run_cli("--set sde.bogus=1 transform-check", dir / "log") == 2);
    CHECK(run_cli("w2 --a " + (dir / "missing.csv").string(), dir / "log") == 2);
  }

  TEST_CASE("cli: transform-check passes and writes provenance") {
    const auto dir = scratch("cli_tr");
    CHECK(run_cli("--out " + (dir / "out").string() + " transform-check", dir / "log") == 0);
    const std::string csv = slurp(dir / "out" / "transform.csv");
    CHECK(csv.find("# command: transform-check") != std::string::npos);
  }

  TEST_CASE("cli: bounds with no error budget are zero") {
    const auto dir = scratch("cli_bounds");
    const int rc = run_cli("--out " + (dir / "out").string() +
                               " --set sweep.epsilon=0 --set bounds.eta=0 --set bounds.second_moment=0"
                               " --set bounds.empirical=false bounds",
                           dir / "log");
    CHECK(rc == 0);
    std::ifstream in(dir / "out" / "bounds.csv");
    std::string line;
    int found = 0;
    while (std::getline(in, line)) {
      if (line.rfind("COU,W2,", 0) != 0 && line.rfind("CVP,W2sq,", 0) != 0) continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      REQUIRE(cells.size() == 12);
      CHECK(std::stod(cells[7]) == 0.0);
      ++found;
    }
    CHECK(found == 2);
  }
}
