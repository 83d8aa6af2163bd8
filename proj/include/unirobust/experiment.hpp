#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "unirobust/kernels.hpp"
#include "unirobust/optim.hpp"
#include "unirobust/problems.hpp"

namespace unirobust {

/// Configuration error anchored to a line of the source file (1-based; 0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& file, int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::LinearRegressionMSE;
  std::size_t n = 1000;
  std::size_t k = 10;
  std::size_t K = 3;
  std::vector<double> lambdas{0.0};
  double noise_sd = 0.1;
  double outlier_sd = 5.0;
  double separation = 3.0;
  double test_fraction = 0.2;
};

struct MethodSpec {
  std::string name;
  /// "aaa" or a baseline mode name.
  std::string mode = "sgd";
  std::optional<RobustKernel> kernel;
  double eta = 1e-3;
  std::size_t batch_size = 1;
  std::int64_t T = 1;
  double zeta = 0.9;
  std::int64_t max_iters = 1000;
  StopConfig stop;
  double momentum = 0.9;
  double clip_tau = 1.0;
  std::int64_t param_update_period = 0;
  std::optional<double> c0;
  std::optional<std::pair<double, double>> c_bracket;
  double bisection_tol = 1e-9;
  LossMemory memory = LossMemory::full_pass;
  std::size_t ring_capacity = 1024;

  bool is_aaa() const { return mode == "aaa"; }
};

struct DiagnosticsSpec {
  bool enabled = true;
  /// Kernel for the variance and region statistics of baseline runs.
  RobustKernel baseline_kernel{KernelKind::GemanMcClure, 1.0};
  /// Target mean weight used to pick c for baseline runs.
  double baseline_zeta = 0.9;
  bool trajectory = true;
};

struct ExperimentConfig {
  std::string source;
  ProblemSpec problem;
  std::vector<MethodSpec> methods;
  std::size_t trials = 1;
  std::uint64_t base_seed = 0;
  std::filesystem::path output_dir = "out";
  std::int64_t log_period = 100;
  int workers = 0;
  bool write_runs = true;
  DiagnosticsSpec diagnostics;

  /// Canonical JSON of every field that affects results (excludes output location and workers).
  nlohmann::json canonical() const;
  /// 16 hex digits, FNV-1a over canonical().dump().
  std::string hash() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source_name = "<string>");

/// 64-bit finalizer used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);
/// Instance seed for trial j at sweep point m: splitmix64(base_seed ^ splitmix64(j << 32 | m)).
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t trial, std::uint64_t sweep_point);
/// Optimizer (batch sampling) seed for that instance, shared by every method.
std::uint64_t derive_run_seed(std::uint64_t instance_seed);

ProblemInstance make_instance(const ProblemSpec& spec, double lambda, std::uint64_t seed);
/// Regenerates an instance from the "problem" block stored in a run JSON.
ProblemInstance instance_from_json(const nlohmann::json& problem);

struct RunResult {
  std::size_t sweep_point = 0;
  double lambda = 0.0;
  std::size_t method = 0;
  std::size_t trial = 0;
  std::uint64_t instance_seed = 0;
  RunRecord record;
  bool failed = false;
  std::string failure;
  nlohmann::json diagnostics;
};

struct SummaryRow {
  double lambda = 0.0;
  std::string method;
  std::string metric;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  double mean_clean_loss = 0.0;
  double mean_final_c = 0.0;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  std::vector<SummaryRow> summary;
  nlohmann::json kernel_reports;
};

inline constexpr const char* kSummaryCsvHeader =
    "lambda,method,metric,trials,failures,mean,std,min,max,mean_clean_loss,mean_final_c";

/// Runs every (lambda, method, trial) combination. Trials run concurrently up to
/// cfg.workers (0 means the OpenMP default). Writes summary.csv, diagnostics.json
/// and per-run files under cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const std::vector<RunResult>& runs);
void write_summary_csv(const ExperimentConfig& cfg, const std::vector<SummaryRow>& rows,
                       const std::filesystem::path& path);

/// Applies UNIROBUST_OUTPUT_DIR and UNIROBUST_WORKERS when set.
void apply_environment_overrides(ExperimentConfig& cfg);

}  // namespace unirobust
