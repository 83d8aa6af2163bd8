#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace unirobust {

enum class ProblemKind { LinearRegressionMSE, SoftmaxClassificationCE };

std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

/// One training or test sample. Labels are stored as doubles; for classification
/// they hold integral class indices. The clean label, outlier flag and
/// perturbation are oracle fields and are never read by the optimizers.
struct Sample {
  std::vector<double> x;
  double observed_label = 0.0;
  double clean_label = 0.0;
  bool is_outlier = false;
  /// Regression: the offset o_i added to the label. Classification: 0 (the
  /// corruption is fully described by the clean/observed pair).
  double perturbation = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct RegressionConfig {
  std::size_t n = 1000;
  std::size_t k = 10;
  double lambda = 0.0;
  double noise_sd = 0.1;
  double outlier_sd = 5.0;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct ClassificationConfig {
  std::size_t n = 600;
  std::size_t k = 5;
  std::size_t K = 3;
  double lambda = 0.0;
  double separation = 3.0;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct ProblemInstance {
  ProblemKind kind = ProblemKind::LinearRegressionMSE;
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::size_t k = 0;
  /// Number of classes; 1 for regression.
  std::size_t K = 1;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  /// Regression: generating weights. Classification: flattened class means (K x k).
  std::vector<double> w_star;
  /// Generator parameters, kept for provenance.
  nlohmann::json generator;

  std::size_t n() const { return train.size(); }
  /// Length of the model weight vector: k for regression, k * K for classification.
  std::size_t dim() const { return kind == ProblemKind::LinearRegressionMSE ? k : k * K; }
  std::size_t outlier_count() const;

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

/// y_i = w*^T x_i + eps_i + o_i with x ~ U(0,1]^k, w* ~ N(0,1), eps ~ N(0, noise_sd)
/// and o ~ N(0, outlier_sd) on an exactly round(lambda n) subset.
ProblemInstance gen_linear_regression(const RegressionConfig& cfg);

/// K unit-covariance Gaussian blobs with means (separation / sqrt 2) e_j, so every pair of
/// means is `separation` apart. Requires k >= K. A round(lambda n) subset of labels is
/// replaced by a uniformly chosen different class.
ProblemInstance gen_blob_classification(const ClassificationConfig& cfg);

// Per-sample model. The classification weight vector is W (k x K) flattened
// row-major: w[j * K + c].

double sample_loss(const ProblemInstance& p, std::span<const double> w, std::size_t i);
std::vector<double> sample_grad(const ProblemInstance& p, std::span<const double> w, std::size_t i);

double oracle_clean_loss(const ProblemInstance& p, std::span<const double> w, std::size_t i);
std::vector<double> oracle_clean_grad(const ProblemInstance& p, std::span<const double> w,
                                      std::size_t i);

/// h_i = grad f_i - grad f_{i,I}. Regression: -2 o_i x_i. DomainError for inliers.
std::vector<double> oracle_outlier_gradient(const ProblemInstance& p, std::span<const double> w,
                                            std::size_t i);

/// Clean-test RMSE (regression) or top-1 accuracy (classification).
double test_metric(const ProblemInstance& p, std::span<const double> w);

// Lower-level helpers shared by the batched kernels.

/// Loss of the linear model on (x, label).
double model_loss(ProblemKind kind, std::size_t K, std::span<const double> x, double label,
                  std::span<const double> w);
/// out += scale * grad of model_loss. Returns the loss.
double model_loss_grad_accumulate(ProblemKind kind, std::size_t K, std::span<const double> x,
                                  double label, std::span<const double> w, double scale,
                                  std::span<double> out);

void check_dim(const ProblemInstance& p, std::span<const double> w);

// Serialization: <stem>.train.csv, <stem>.test.csv and <stem>.json. The CSV header is
// x0,...,x{k-1} followed by kProblemCsvLabelColumns.

inline constexpr const char* kProblemCsvLabelColumns = "observed_label,clean_label,is_outlier,perturbation";

void save_problem(const ProblemInstance& p, const std::filesystem::path& stem);
ProblemInstance load_problem(const std::filesystem::path& stem);

nlohmann::json problem_metadata(const ProblemInstance& p);

/// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double_exact(std::string_view s);

}  // namespace unirobust
