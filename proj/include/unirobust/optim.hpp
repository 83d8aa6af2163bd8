#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unirobust/kernels.hpp"
#include "unirobust/problems.hpp"

namespace unirobust {

struct TrainState {
  std::vector<double> w;
  /// Coefficient weights, length n. Empty for baselines.
  std::vector<double> u;
  double c = 0.0;
  std::int64_t t = 0;
  /// Iteration of the last coefficient refresh.
  std::int64_t s = 0;
  /// Momentum buffer (momentum baseline only).
  std::vector<double> velocity;
};

enum class BaselineMode { sgd, gd, momentum, clip, normalized };

std::string_view to_string(BaselineMode mode);
BaselineMode parse_baseline_mode(std::string_view name);

struct StopConfig {
  /// Relative change threshold; 0 disables early stopping.
  double eps = 1e-6;
  int patience = 5;
};

struct BaselineConfig {
  BaselineMode mode = BaselineMode::sgd;
  double eta = 1e-3;
  std::size_t batch_size = 1;
  double momentum = 0.9;
  double clip_tau = 1.0;
  std::int64_t max_iters = 1000;
  std::int64_t log_period = 100;
  StopConfig stop;
};

enum class LossMemory { full_pass, ring_buffer };

struct AAAConfig {
  RobustKernel kernel{KernelKind::GemanMcClure, 1.0};
  double eta = 1e-3;
  std::size_t batch_size = 1;
  std::int64_t T = 1;
  double zeta = 0.9;
  /// Initial scale; defaults to max(D) at the first refresh.
  std::optional<double> c0;
  /// Iterations between parameter updates; 0 means T.
  std::int64_t param_update_period = 0;
  /// Fixed search interval; defaults to [1e-6 median(D+), 1e6 max(D)].
  std::optional<std::pair<double, double>> c_bracket;
  double bisection_tol = 1e-9;
  std::int64_t max_iters = 1000;
  std::int64_t log_period = 100;
  StopConfig stop;
  LossMemory memory = LossMemory::full_pass;
  std::size_t ring_capacity = 1024;

  void validate() const;
};

struct LogRow {
  std::int64_t t = 0;
  /// AAA: (1/n) sum sigma_c(f_i). Baselines: (1/n) sum f_i.
  double train_robust_loss = 0.0;
  double clean_loss = 0.0;
  double test_metric = 0.0;
  /// Kernel scale; 0 for baselines.
  double c = 0.0;
  double mean_u = 1.0;
  double min_u = 1.0;
};

struct RunRecord {
  std::string method;
  std::vector<LogRow> rows;
  std::vector<double> final_w;
  std::int64_t iterations = 0;
  bool stopped_early = false;
  bool aborted = false;
  std::string abort_reason;
  std::int64_t saturation_high = 0;
  std::int64_t saturation_low = 0;
  std::int64_t parameter_updates = 0;
  double final_test_metric = 0.0;
  double final_train_loss = 0.0;
  double final_clean_loss = 0.0;
  /// (1/n) sum f_i(w) at the final iterate.
  double final_observed_loss = 0.0;
  double final_c = 0.0;
};

/// Column order of the per-run CSV.
inline constexpr const char* kRunCsvHeader = "t,train_robust_loss,clean_loss,test_metric,c,mean_u,min_u";

void write_run_csv(const RunRecord& rec, const std::string& path);
nlohmann::json run_summary_json(const RunRecord& rec);

/// u_i = sigma'_c(f_i) for the kernel rescaled to c.
std::vector<double> coefficient_update(const RobustKernel& kernel, double c,
                                       std::span<const double> losses);

struct ParameterUpdateResult {
  double c = 0.0;
  double mean_weight = 0.0;
  /// Mean weight at c_max is below zeta; c = c_max.
  bool saturated_high = false;
  /// All losses zero, or mean weight at c_min already above zeta; c = c_min.
  bool saturated_low = false;
  int iterations = 0;
};

/// [1e-6 median(D+), 1e6 max(D)], with D+ the positive losses. {1e-6, 1} for all-zero D.
std::pair<double, double> default_bracket(std::span<const double> losses);

/// Solves (1/|D|) sum sigma'_c(f_i) = zeta for c by bisection in log c. For
/// LinearTruncated, returns the smallest loss value c with #{f <= c} >= zeta |D|.
/// Kernels without a scale are returned with c unchanged (their mean weight does not depend on c).
ParameterUpdateResult parameter_update(const RobustKernel& kernel, std::span<const double> losses,
                                       double zeta, std::optional<std::pair<double, double>> bracket = {},
                                       double tol = 1e-9);

/// Samples batch_size indices uniformly with replacement, or the full set for gd.
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);

/// One baseline update. gd ignores `batch` and uses the full training set.
/// Throws NonFiniteError when the gradient or the new iterate is not finite.
void baseline_step(const ProblemInstance& p, TrainState& state, std::span<const std::size_t> batch,
                   const BaselineConfig& cfg);

/// w <- w - eta (1/|batch|) sum u_i grad f_i(w); t += 1. u is not touched.
void aaa_step(const ProblemInstance& p, TrainState& state, std::span<const std::size_t> batch,
              const AAAConfig& cfg);

enum class RunEvent { start, refresh, log, finish };

/// Called with the state after each event. `losses` are f_i at state.w when known, else empty.
using RunObserver =
    std::function<void(RunEvent, const TrainState&, std::span<const double> losses)>;

RunRecord run_baseline(const ProblemInstance& p, const BaselineConfig& cfg, std::uint64_t seed,
                       const RunObserver& observer = {});

RunRecord run_aaa(const ProblemInstance& p, const AAAConfig& cfg, std::uint64_t seed,
                  const RunObserver& observer = {});

}  // namespace unirobust
