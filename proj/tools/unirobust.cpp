#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "unirobust/diagnostics.hpp"
#include "unirobust/errors.hpp"
#include "unirobust/experiment.hpp"
#include "unirobust/kernels.hpp"

#ifndef UNIROBUST_VERSION
#define UNIROBUST_VERSION "0.0.0"
#endif

namespace ur = unirobust;

namespace {

constexpr int kUsageError = 1;
constexpr int kInternalError = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int cmd_run(const std::string& config_path, const std::string& output, int workers) {
  auto cfg = ur::load_config(config_path);
  ur::apply_environment_overrides(cfg);
  if (!output.empty()) cfg.output_dir = output;
  if (workers >= 0) cfg.workers = workers;
  const auto result = ur::run_experiment(cfg);
  std::size_t failed = 0;
  for (const auto& r : result.runs) failed += r.failed ? 1 : 0;
  fmt::print("{} runs ({} failed), config {} -> {}\n", result.runs.size(), failed, cfg.hash(),
             (cfg.output_dir / "summary.csv").string());
  for (const auto& row : result.summary) {
    fmt::print("  lambda={:<5} {:<14} {}={:.6g} +/- {:.3g}{}\n", ur::format_double(row.lambda), row.method,
               row.metric, row.mean, row.std, row.failures ? fmt::format("  ({} failed)", row.failures) : "");
  }
  return 0;
}

int cmd_kernels(bool all, const std::vector<std::string>& specs, const std::string& format) {
  if (!all && specs.empty()) throw UsageError("kernels: pass --all or at least one kernel spec");
  if (format != "table" && format != "json" && format != "both") {
    throw UsageError("kernels: --format must be table, json or both");
  }
  std::vector<ur::RobustKernel> kernels;
  if (all) {
    for (auto k : ur::kAllKernelKinds) kernels.emplace_back(k, 1.0);
  }
  for (const auto& s : specs) kernels.push_back(ur::parse_kernel_spec(s));

  nlohmann::json out = nlohmann::json::array();
  std::vector<ur::ConformanceReport> reports;
  for (const auto& k : kernels) {
    reports.push_back(ur::conformance_check(k));
    out.push_back(ur::to_json(reports.back()));
  }
  if (format != "json") {
    auto cell = [](const ur::ConditionResult& c) {
      return fmt::format("{} {:<10.3g}", c.pass ? "pass" : "FAIL", c.measured);
    };
    fmt::print("{:<36} {:<15} {:<15} {:<15} {:<9} {}\n", "kernel", "(i) |s'(lo)-1|", "(ii) s'(hi)",
               "(iii) max incr", "s(0)", "notes");
    for (const auto& r : reports) {
      std::string notes = r.all_pass() ? "ok" : "does not satisfy the kernel definition";
      if (r.step_function) notes += ", step derivative";
      fmt::print("{:<36} {:<15} {:<15} {:<15} {:<9.4g} {}\n", r.kernel_id, cell(r.cond_i), cell(r.cond_ii),
                 cell(r.cond_iii), r.value_at_zero, notes);
    }
  }
  if (format == "both") std::cout << '\n';
  if (format != "table") std::cout << out.dump(2) << '\n';
  return 0;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

int cmd_landscape(const std::string& run_a, const std::string& run_b, int grid, double from, double to,
                  const std::string& output) {
  if (grid < 2) throw UsageError("landscape: --grid must be >= 2");
  const auto a = read_json(run_a);
  const auto b = read_json(run_b);
  const auto w_a = a.at("record").at("final_w").get<std::vector<double>>();
  const auto w_b = b.at("record").at("final_w").get<std::vector<double>>();
  if (w_a.size() != w_b.size()) {
    throw UsageError(fmt::format("landscape: weight dimensions differ ({} vs {})", w_a.size(), w_b.size()));
  }
  if (a.at("problem") != b.at("problem")) {
    std::cerr << "warning: runs were trained on different instances; using the first run's instance\n";
  }
  const auto p = ur::instance_from_json(a.at("problem"));
  if (p.dim() != w_a.size()) throw UsageError("landscape: weights do not match the problem dimension");

  std::vector<double> kappas(static_cast<std::size_t>(grid));
  for (int i = 0; i < grid; ++i) {
    kappas[i] = i == grid - 1 ? to : from + (to - from) * static_cast<double>(i) / (grid - 1);
  }
  const auto obs = ur::landscape_1d(p, w_a, w_b, kappas, ur::LandscapeLoss::observed);
  const auto clean = ur::landscape_1d(p, w_a, w_b, kappas, ur::LandscapeLoss::clean);

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!output.empty() && output != "-") {
    file.open(output, std::ios::binary);
    if (!file) throw UsageError("cannot write " + output);
    os = &file;
  }
  *os << "# lambda=" << ur::format_double(p.lambda) << " seed=" << p.seed << '\n';
  *os << ur::kLandscapeCsvHeader << '\n';
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    *os << ur::format_double(obs[i].kappa) << ',' << ur::format_double(obs[i].loss) << ','
        << ur::format_double(clean[i].loss) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust loss kernels and the adaptive alternation algorithm"};
  app.require_subcommand(1);

  std::string config_path, output;
  int workers = -1;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "YAML config file")->required();
  run->add_option("--output", output, "Output directory (overrides config and environment)");
  run->add_option("--workers", workers, "Concurrent runs (0 = OpenMP default)");

  bool all = false;
  std::vector<std::string> specs;
  std::string format = "both";
  auto* kernels = app.add_subcommand("kernels", "Kernel conformance report");
  kernels->add_flag("--all", all, "Every kernel kind at default parameters");
  kernels->add_option("specs", specs, "Kernel specs such as gm:c=2 or barron:alpha=1");
  kernels->add_option("--format", format, "table, json or both");

  std::string run_a, run_b, land_out;
  int grid = 101;
  double from = 0.0, to = 1.0;
  auto* land = app.add_subcommand("landscape", "Interpolate the loss between two runs' final weights");
  land->add_option("run_a", run_a, "Run JSON for kappa = 0")->required();
  land->add_option("run_b", run_b, "Run JSON for kappa = 1")->required();
  land->add_option("--grid", grid, "Number of kappa values");
  land->add_option("--from", from, "First kappa");
  land->add_option("--to", to, "Last kappa");
  land->add_option("--output", land_out, "Output CSV (default stdout)");

  app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*run) return cmd_run(config_path, output, workers);
    if (*kernels) return cmd_kernels(all, specs, format);
    if (*land) return cmd_landscape(run_a, run_b, grid, from, to, land_out);
    fmt::print("unirobust {}\n", UNIROBUST_VERSION);
    return 0;
  } catch (const ur::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ur::ParameterDomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed run file: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}
