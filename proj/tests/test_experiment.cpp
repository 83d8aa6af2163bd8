#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "unirobust/diagnostics.hpp"
#include "unirobust/experiment.hpp"

using namespace unirobust;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("unirobust_exp_" + name);
  fs::remove_all(d);
  return d;
}

int error_line(const std::string& text) {
  try {
    parse_config(text, "cfg.yaml");
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

const char* kSmall = R"(problem:
  kind: regression
  n: 120
  k: 3
  lambda: [0.0, 0.3]
methods:
  - name: sgd
    mode: sgd
    eta: 0.01
    max_iters: 200
  - name: tl
    mode: aaa
    kernel: tl
    eta: 0.01
    max_iters: 200
    zeta: 0.7
trials: 2
base_seed: 99
outputs:
  log_period: 50
)";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config parses with defaults and kernel specs") {
  const auto cfg = parse_config(kSmall, "small.yaml");
  CHECK(cfg.problem.kind == ProblemKind::LinearRegressionMSE);
  CHECK(cfg.problem.lambdas == std::vector<double>{0.0, 0.3});
  REQUIRE(cfg.methods.size() == 2);
  CHECK_FALSE(cfg.methods[0].is_aaa());
  CHECK(cfg.methods[1].kernel->kind() == KernelKind::LinearTruncated);
  CHECK(cfg.methods[1].zeta == 0.7);
  CHECK(cfg.trials == 2);
  CHECK(cfg.base_seed == 99);
  CHECK(cfg.log_period == 50);
  CHECK(cfg.hash().size() == 16);

  const auto m = parse_config(R"(problem: {kind: classification, lambda: 0.4}
methods:
  - {name: gm, mode: aaa, kernel: {kind: Barron, alpha: 1.0, c: 2}}
)");
  CHECK(m.problem.n == 600);
  CHECK(m.problem.k == 5);
  CHECK(m.methods[0].kernel->c() == 2.0);
}

TEST_CASE("config errors carry line numbers") {
  CHECK(error_line("problem:\n  kind: regression\nmethods:\n  - name: a\n    mode: sgd\n    eta: -1\n") == 6);
  CHECK(error_line("problem:\n  kind: regression\n  bogus: 1\nmethods:\n  - {name: a}\n") == 3);
  CHECK(error_line("problem:\n  kind: regression\nmethods:\n  - name: a\n    mode: aaa\n    kernel: sce\n") == 6);
  CHECK(error_line("problem:\n  kind: regression\nmethods:\n  - name: a\n    mode: aaa\n") == 4);
  CHECK(error_line("problem:\n  kind: regression\n  lambda: 1.0\nmethods:\n  - {name: a}\n") == 3);
  CHECK(error_line("problem:\n  kind: regression\nmethods:\n  - {name: a, mode: sgd}\n  - {name: a, mode: gd}\n") == 5);
  CHECK(error_line("problem: [1, 2\n") > 0);
  CHECK(error_line("problem:\n  kind: regression\nmethods: []\n") == 3);
  CHECK(error_line("problem:\n  kind: regression\nmethods:\n  - {name: a}\n") == 4);
  try {
    parse_config("problem:\n  kind: regression\nmethods:\n  - name: a\n    mode: sgd\n    eta: -1\n", "cfg.yaml");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("cfg.yaml:6:", 0) == 0);
  }
}

TEST_CASE("seed derivation") {
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFull);
  CHECK(derive_seed(5, 1, 2) == splitmix64(5 ^ splitmix64((1ull << 32) | 2)));
  std::set<std::uint64_t> seen;
  for (std::uint64_t j = 0; j < 20; ++j) {
    for (std::uint64_t m = 0; m < 20; ++m) seen.insert(derive_seed(7, j, m));
  }
  CHECK(seen.size() == 400);
  CHECK(derive_run_seed(derive_seed(7, 0, 0)) != derive_seed(7, 0, 0));
}

TEST_CASE("hash ignores output location and worker count") {
  auto a = parse_config(kSmall);
  auto b = a;
  b.output_dir = "elsewhere";
  b.workers = 3;
  CHECK(a.hash() == b.hash());
  b.base_seed = 100;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("identical configs give byte-identical summaries") {
  auto cfg = parse_config(kSmall);
  cfg.output_dir = scratch("det_a");
  const auto ra = run_experiment(cfg);
  auto cfg2 = cfg;
  cfg2.output_dir = scratch("det_b");
  cfg2.workers = 1;
  run_experiment(cfg2);
  const auto sa = slurp(cfg.output_dir / "summary.csv");
  CHECK(sa == slurp(cfg2.output_dir / "summary.csv"));
  CHECK(slurp(cfg.output_dir / "runs" / "l01_tl_t1.csv") == slurp(cfg2.output_dir / "runs" / "l01_tl_t1.csv"));
  CHECK(sa.rfind("# config_hash=" + cfg.hash(), 0) == 0);
  CHECK(sa.find(kSummaryCsvHeader) != std::string::npos);
  CHECK(ra.runs.size() == 8);
  CHECK(ra.summary.size() == 4);
  const auto run_json = nlohmann::json::parse(slurp(cfg.output_dir / "runs" / "l00_sgd_t0.json"));
  CHECK(run_json.at("config_hash") == cfg.hash());
  CHECK(run_json.at("base_seed") == 99);
  const auto diag = nlohmann::json::parse(slurp(cfg.output_dir / "diagnostics.json"));
  CHECK(diag.at("config_hash") == cfg.hash());
  CHECK(diag.at("runs").size() == 8);
  fs::remove_all(cfg.output_dir);
  fs::remove_all(cfg2.output_dir);
}

TEST_CASE("single trial summary has zero standard deviation") {
  auto cfg = parse_config(R"(problem: {kind: regression, n: 80, k: 2, lambda: 0.0}
methods:
  - {name: sgd, mode: sgd, eta: 0.01, max_iters: 100}
trials: 1
outputs: {write_runs: false}
diagnostics: {enabled: false}
)");
  cfg.output_dir = scratch("single");
  const auto r = run_experiment(cfg);
  REQUIRE(r.summary.size() == 1);
  CHECK(r.runs.size() == 1);
  CHECK(r.summary[0].std == 0.0);
  CHECK(r.summary[0].trials == 1);
  CHECK(r.summary[0].mean == r.runs[0].record.final_test_metric);
  CHECK_FALSE(fs::exists(cfg.output_dir / "runs"));
  fs::remove_all(cfg.output_dir);
}

TEST_CASE("diverged runs are recorded and do not stop the sweep") {
  auto cfg = parse_config(R"(problem: {kind: regression, n: 80, k: 4, lambda: 0.5}
methods:
  - {name: gd, mode: gd, eta: 50, max_iters: 2000}
  - {name: sgd, mode: sgd, eta: 0.01, max_iters: 100}
trials: 2
)");
  cfg.output_dir = scratch("diverge");
  const auto r = run_experiment(cfg);
  CHECK(r.summary[0].failures == 2);
  CHECK(r.summary[1].failures == 0);
  CHECK(std::isfinite(r.summary[1].mean));
  fs::remove_all(cfg.output_dir);
}

TEST_CASE("environment overrides") {
  auto cfg = parse_config(kSmall);
  setenv("UNIROBUST_OUTPUT_DIR", "/tmp/unirobust_env_dir", 1);
  setenv("UNIROBUST_WORKERS", "3", 1);
  apply_environment_overrides(cfg);
  CHECK(cfg.output_dir == fs::path("/tmp/unirobust_env_dir"));
  CHECK(cfg.workers == 3);
  setenv("UNIROBUST_WORKERS", "x", 1);
  CHECK_THROWS_AS(apply_environment_overrides(cfg), ConfigError);
  unsetenv("UNIROBUST_OUTPUT_DIR");
  unsetenv("UNIROBUST_WORKERS");
}

TEST_CASE("instances regenerate from the stored problem block") {
  const auto cfg = parse_config(kSmall);
  const auto p = make_instance(cfg.problem, 0.3, 1234);
  nlohmann::json j = {{"kind", "regression"}, {"n", 120}, {"k", 3}, {"lambda", 0.3}, {"seed", 1234}};
  CHECK(instance_from_json(j) == p);
}

TEST_CASE("schema hash of documented CSV headers") {
  const std::string headers = std::string(kSummaryCsvHeader) + "\n" + kRunCsvHeader + "\n" + kLandscapeCsvHeader +
                              "\n" + kProblemCsvLabelColumns;
  const auto doc = slurp(fs::path(UNIROBUST_SOURCE_DIR) / "docs" / "formats.md");
  REQUIRE_FALSE(doc.empty());
  CHECK(doc.find(kSummaryCsvHeader) != std::string::npos);
  CHECK(doc.find(kRunCsvHeader) != std::string::npos);
  CHECK(doc.find(kLandscapeCsvHeader) != std::string::npos);
  CHECK(doc.find(kProblemCsvLabelColumns) != std::string::npos);
  std::smatch m;
  REQUIRE(std::regex_search(doc, m, std::regex("schema-hash: ([0-9a-f]{16})")));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(headers)));
  CHECK(m[1].str() == std::string(buf));
}

}  // TEST_SUITE
