#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "unirobust/kernels.hpp"
#include "unirobust/problems.hpp"

namespace unirobust {

struct VarianceReport {
  /// (1/n) sum_i ||eta grad f_i - eta grad f_I||^2
  double empirical_sgd = 0.0;
  /// 3 eta^2 lambda (1/n_O) sum_O ||h_i||^2
  double bound_sgd = 0.0;
  /// (1/n) sum_i ||eta sigma'(f_i) grad f_i - eta grad f_I||^2
  double empirical_aaa = 0.0;
  /// 3 eta^2 lambda (1/n_O) sum_O sigma'(f_i)^2 ||h_i||^2
  double bound_aaa = 0.0;
  /// ||(1/n_O) sum_O h_i||
  double outlier_mean_norm = 0.0;

  /// The empirical entries recomputed as mean ||a_i||^2 - 2 <mean a, b> + ||b||^2.
  double empirical_sgd_expanded = 0.0;
  double empirical_aaa_expanded = 0.0;
  /// eta^2 E_i ||grad f_{i,I}||^2 - eta^2 ||grad f_I||^2 + bound_sgd
  double chain_rhs = 0.0;
  bool chain_holds = false;
  /// Share of outliers with ||h_i|| < 1 or ||h_i|| < ||grad f_{i,I}||.
  double assumption2_violation_fraction = 0.0;
};

/// Exact full-dataset evaluation. grad f_I = (1/n) sum_i grad f_{i,I}. The kernel is
/// evaluated at scale c.
VarianceReport variance_report(const ProblemInstance& p, std::span<const double> w,
                               const RobustKernel& kernel, double c, double eta);

struct RegionReport {
  /// (1/n_O) sum_O ||h_i||^2
  double M_sgd = 0.0;
  /// (1/n_O) sum_O sigma'_c(f_i)^2 ||h_i||^2
  double M_aaa = 0.0;
  /// (1/n) sum_i sigma'_c(f_i)
  double mean_weight = 0.0;
  /// min_i sigma'_c(f_i)
  double min_weight = 0.0;
  /// min_i sigma_c(f_i)
  double min_sigma = 0.0;
  /// Outliers with ||h_i|| < 1.
  double frac_h_below_one = 0.0;
  /// Outliers with ||h_i|| < ||grad f_{i,I}||.
  double frac_h_below_clean_grad = 0.0;
  /// Outliers violating either of the above.
  double assumption2_violation_fraction = 0.0;
  /// Outliers with sigma'_c(f_i) < 1.
  std::size_t outliers_downweighted = 0;
  std::size_t n_outliers = 0;
};

RegionReport region_report(const ProblemInstance& p, std::span<const double> w,
                           const RobustKernel& kernel, double c);

/// (1/n_O) sum_O sigma'_{c_s}(f_i(w_s))^2 ||h_i(w_t)||^2: the summand of the history
/// region, with weights frozen at the last refresh and perturbations at the current iterate.
double stale_region_statistic(const ProblemInstance& p, std::span<const double> w_t,
                              std::span<const double> w_s, const RobustKernel& kernel, double c_s);

struct StepSizeReport {
  /// 2 max_i ||x_i||^2
  double L = 0.0;
  /// Smallest positive eigenvalue of (2/n) X^T X.
  double mu = 0.0;
  /// Clean least-squares optimum f*_I and Delta = f*_I / n.
  double f_star_clean = 0.0;
  double delta = 0.0;
  /// (mu / L) min{1/L, eps / (3 lambda M + 2 L Delta)}
  double eta_sgd = 0.0;
  /// (mu beta / L) min{1/L, eps / (3 lambda M + 2 L Delta zeta)}
  double eta_aaa = 0.0;
};

/// Linear regression only (UnsupportedOperation otherwise).
StepSizeReport step_size_thresholds(const ProblemInstance& p, double eps, double M_sgd, double M_aaa,
                                    double beta, double zeta);

enum class LandscapeLoss { observed, clean };

inline constexpr const char* kLandscapeCsvHeader = "kappa,observed_loss,clean_loss";

struct LandscapePoint {
  double kappa = 0.0;
  double loss = 0.0;
};

/// f((1 - kappa) w_a + kappa w_b) averaged over the training set.
std::vector<LandscapePoint> landscape_1d(const ProblemInstance& p, std::span<const double> w_a,
                                         std::span<const double> w_b, std::span<const double> kappas,
                                         LandscapeLoss loss);

/// Max over coordinates of |g_j - fd_j| / |fd_j| for central differences with step h.
/// Coordinates whose central difference is below 1e-8 in magnitude contribute the
/// absolute error instead.
double finite_diff_check(const ProblemInstance& p, std::span<const double> w, std::size_t i, double h);

nlohmann::json to_json(const VarianceReport& r);
nlohmann::json to_json(const RegionReport& r);
nlohmann::json to_json(const StepSizeReport& r);

}  // namespace unirobust
