#include "unirobust/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "unirobust/errors.hpp"
#include "unirobust/parallel.hpp"

namespace unirobust {

namespace {

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

// Per-sample observed gradient, clean gradient and loss, stored row-major (n x dim).
struct GradientTable {
  std::size_t dim = 0;
  std::vector<double> grad;
  std::vector<double> clean;
  std::vector<double> loss;

  std::span<const double> g(std::size_t i) const { return {grad.data() + i * dim, dim}; }
  std::span<const double> gc(std::size_t i) const { return {clean.data() + i * dim, dim}; }
};

GradientTable gradient_table(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  GradientTable t;
  t.dim = p.dim();
  t.grad.assign(p.n() * t.dim, 0.0);
  t.clean.assign(p.n() * t.dim, 0.0);
  t.loss.assign(p.n(), 0.0);
  par::parallel_for(p.n(), [&](std::size_t i) {
    const auto& s = p.train[i];
    t.loss[i] = model_loss_grad_accumulate(p.kind, p.K, s.x, s.observed_label, w, 1.0,
                                           {t.grad.data() + i * t.dim, t.dim});
    model_loss_grad_accumulate(p.kind, p.K, s.x, s.clean_label, w, 1.0, {t.clean.data() + i * t.dim, t.dim});
  });
  return t;
}

// ||h_i||^2 with h_i = grad_i - clean_i.
double h_sq(const GradientTable& t, std::size_t i) {
  const auto a = t.g(i);
  const auto b = t.gc(i);
  double s = 0.0;
  for (std::size_t j = 0; j < t.dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

}  // namespace

VarianceReport variance_report(const ProblemInstance& p, std::span<const double> w,
                               const RobustKernel& kernel, double c, double eta) {
  const RobustKernel k = kernel.has_scale() ? kernel.with_scale(c) : kernel;
  const auto t = gradient_table(p, w);
  const std::size_t n = p.n();
  const std::size_t d = t.dim;
  VarianceReport r;
  if (n == 0) return r;
  const double nd = static_cast<double>(n);
  const auto u = par::coefficient_weights(k, t.loss);

  std::vector<double> gI(d), mean_a(d), mean_a_aaa(d), h_sum(d);
  par::blocked_vector_sum(n, d, [&](std::size_t i, std::span<double> acc) {
    const auto b = t.gc(i);
    for (std::size_t j = 0; j < d; ++j) acc[j] += b[j];
  }, gI);
  par::blocked_vector_sum(n, d, [&](std::size_t i, std::span<double> acc) {
    const auto a = t.g(i);
    for (std::size_t j = 0; j < d; ++j) acc[j] += a[j];
  }, mean_a);
  par::blocked_vector_sum(n, d, [&](std::size_t i, std::span<double> acc) {
    const auto a = t.g(i);
    for (std::size_t j = 0; j < d; ++j) acc[j] += u[i] * a[j];
  }, mean_a_aaa);
  par::blocked_vector_sum(n, d, [&](std::size_t i, std::span<double> acc) {
    if (!p.train[i].is_outlier) return;
    const auto a = t.g(i);
    const auto b = t.gc(i);
    for (std::size_t j = 0; j < d; ++j) acc[j] += a[j] - b[j];
  }, h_sum);
  for (auto* v : {&gI, &mean_a, &mean_a_aaa}) {
    for (double& x : *v) x /= nd;
  }

  const double eta2 = eta * eta;
  auto dev_sq = [&](std::span<const double> a, double scale) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = scale * a[j] - gI[j];
      s += e * e;
    }
    return s;
  };
  r.empirical_sgd = eta2 * par::blocked_sum(n, [&](std::size_t i) { return dev_sq(t.g(i), 1.0); }) / nd;
  r.empirical_aaa = eta2 * par::blocked_sum(n, [&](std::size_t i) { return dev_sq(t.g(i), u[i]); }) / nd;

  const double ms_a = par::blocked_sum(n, [&](std::size_t i) { return sq_norm(t.g(i)); }) / nd;
  const double ms_a_aaa = par::blocked_sum(n, [&](std::size_t i) { return u[i] * u[i] * sq_norm(t.g(i)); }) / nd;
  const double ms_b = par::blocked_sum(n, [&](std::size_t i) { return sq_norm(t.gc(i)); }) / nd;
  const double gI_sq = sq_norm(gI);
  r.empirical_sgd_expanded = eta2 * (ms_a - 2.0 * dot(mean_a, gI) + gI_sq);
  r.empirical_aaa_expanded = eta2 * (ms_a_aaa - 2.0 * dot(mean_a_aaa, gI) + gI_sq);

  const std::size_t n_out = p.outlier_count();
  if (n_out > 0) {
    const double lambda = static_cast<double>(n_out) / nd;
    const double no = static_cast<double>(n_out);
    const double sum_h = par::blocked_sum(n, [&](std::size_t i) {
      return p.train[i].is_outlier ? h_sq(t, i) : 0.0;
    });
    const double sum_hu = par::blocked_sum(n, [&](std::size_t i) {
      return p.train[i].is_outlier ? u[i] * u[i] * h_sq(t, i) : 0.0;
    });
    r.bound_sgd = 3.0 * eta2 * lambda * sum_h / no;
    r.bound_aaa = 3.0 * eta2 * lambda * sum_hu / no;
    r.outlier_mean_norm = std::sqrt(sq_norm(h_sum)) / no;
    const double violations = par::blocked_sum(n, [&](std::size_t i) {
      if (!p.train[i].is_outlier) return 0.0;
      const double hs = h_sq(t, i);
      return (hs < 1.0 || hs < sq_norm(t.gc(i))) ? 1.0 : 0.0;
    });
    r.assumption2_violation_fraction = violations / no;
  }
  r.chain_rhs = eta2 * (ms_b - gI_sq) + r.bound_sgd;
  r.chain_holds = r.empirical_sgd <= r.chain_rhs * (1.0 + 1e-12);
  return r;
}

RegionReport region_report(const ProblemInstance& p, std::span<const double> w,
                           const RobustKernel& kernel, double c) {
  const RobustKernel k = kernel.has_scale() ? kernel.with_scale(c) : kernel;
  const auto t = gradient_table(p, w);
  const std::size_t n = p.n();
  RegionReport r;
  if (n == 0) return r;
  const auto u = par::coefficient_weights(k, t.loss);
  r.mean_weight = par::mean_weight(k, t.loss);
  r.min_weight = *std::min_element(u.begin(), u.end());
  r.min_sigma = std::numeric_limits<double>::infinity();
  for (double f : t.loss) r.min_sigma = std::min(r.min_sigma, k.value(f));

  r.n_outliers = p.outlier_count();
  if (r.n_outliers == 0) return r;
  const double no = static_cast<double>(r.n_outliers);
  auto over_outliers = [&](auto&& term) {
    return par::blocked_sum(n, [&](std::size_t i) { return p.train[i].is_outlier ? term(i) : 0.0; });
  };
  r.M_sgd = over_outliers([&](std::size_t i) { return h_sq(t, i); }) / no;
  r.M_aaa = over_outliers([&](std::size_t i) { return u[i] * u[i] * h_sq(t, i); }) / no;
  r.frac_h_below_one = over_outliers([&](std::size_t i) { return h_sq(t, i) < 1.0 ? 1.0 : 0.0; }) / no;
  r.frac_h_below_clean_grad =
      over_outliers([&](std::size_t i) { return h_sq(t, i) < sq_norm(t.gc(i)) ? 1.0 : 0.0; }) / no;
  r.assumption2_violation_fraction = over_outliers([&](std::size_t i) {
    const double hs = h_sq(t, i);
    return (hs < 1.0 || hs < sq_norm(t.gc(i))) ? 1.0 : 0.0;
  }) / no;
  for (std::size_t i = 0; i < n; ++i) {
    if (p.train[i].is_outlier && u[i] < 1.0) ++r.outliers_downweighted;
  }
  return r;
}

double stale_region_statistic(const ProblemInstance& p, std::span<const double> w_t,
                              std::span<const double> w_s, const RobustKernel& kernel, double c_s) {
  const RobustKernel k = kernel.has_scale() ? kernel.with_scale(c_s) : kernel;
  const auto t = gradient_table(p, w_t);
  const auto f_s = par::losses(p, w_s);
  const auto u = par::coefficient_weights(k, f_s);
  const std::size_t n_out = p.outlier_count();
  if (n_out == 0) return 0.0;
  const double s = par::blocked_sum(p.n(), [&](std::size_t i) {
    return p.train[i].is_outlier ? u[i] * u[i] * h_sq(t, i) : 0.0;
  });
  return s / static_cast<double>(n_out);
}

StepSizeReport step_size_thresholds(const ProblemInstance& p, double eps, double M_sgd, double M_aaa,
                                    double beta, double zeta) {
  if (p.kind != ProblemKind::LinearRegressionMSE) {
    throw UnsupportedOperation("step-size thresholds are only available for linear regression");
  }
  const auto n = static_cast<Eigen::Index>(p.n());
  const auto k = static_cast<Eigen::Index>(p.k);
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) X(i, j) = p.train[i].x[j];
    y(i) = p.train[i].clean_label;
  }
  StepSizeReport r;
  r.L = 2.0 * X.rowwise().squaredNorm().maxCoeff();
  const Eigen::MatrixXd G = (2.0 / static_cast<double>(n)) * X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double cutoff = 1e-12 * ev.maxCoeff();
  r.mu = 0.0;
  for (Eigen::Index j = 0; j < ev.size(); ++j) {
    if (ev(j) > cutoff) {
      r.mu = ev(j);
      break;
    }
  }
  const Eigen::VectorXd w = X.colPivHouseholderQr().solve(y);
  r.f_star_clean = (y - X * w).squaredNorm() / static_cast<double>(n);
  r.delta = r.f_star_clean / static_cast<double>(n);
  const double lambda = static_cast<double>(p.outlier_count()) / static_cast<double>(n);
  r.eta_sgd = (r.mu / r.L) * std::min(1.0 / r.L, eps / (3.0 * lambda * M_sgd + 2.0 * r.L * r.delta));
  r.eta_aaa = (r.mu * beta / r.L) *
              std::min(1.0 / r.L, eps / (3.0 * lambda * M_aaa + 2.0 * r.L * r.delta * zeta));
  return r;
}

std::vector<LandscapePoint> landscape_1d(const ProblemInstance& p, std::span<const double> w_a,
                                         std::span<const double> w_b, std::span<const double> kappas,
                                         LandscapeLoss loss) {
  if (w_a.size() != w_b.size()) throw ShapeError("landscape endpoints differ in dimension");
  check_dim(p, w_a);
  std::vector<LandscapePoint> out;
  out.reserve(kappas.size());
  std::vector<double> w(w_a.size());
  for (double kappa : kappas) {
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = (1.0 - kappa) * w_a[j] + kappa * w_b[j];
    const double f = loss == LandscapeLoss::observed ? par::mean_loss(p, w) : par::mean_clean_loss(p, w);
    out.push_back({kappa, f});
  }
  return out;
}

double finite_diff_check(const ProblemInstance& p, std::span<const double> w, std::size_t i, double h) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  const auto g = sample_grad(p, w, i);
  std::vector<double> wp(w.begin(), w.end());
  double worst = 0.0;
  for (std::size_t j = 0; j < wp.size(); ++j) {
    const double orig = wp[j];
    wp[j] = orig + h;
    const double fp = sample_loss(p, wp, i);
    wp[j] = orig - h;
    const double fm = sample_loss(p, wp, i);
    wp[j] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(g[j] - fd);
    worst = std::max(worst, std::abs(fd) < 1e-8 ? err : err / std::abs(fd));
  }
  return worst;
}

nlohmann::json to_json(const VarianceReport& r) {
  return {{"empirical_sgd", r.empirical_sgd},
          {"bound_sgd", r.bound_sgd},
          {"empirical_aaa", r.empirical_aaa},
          {"bound_aaa", r.bound_aaa},
          {"outlier_mean_norm", r.outlier_mean_norm},
          {"empirical_sgd_expanded", r.empirical_sgd_expanded},
          {"empirical_aaa_expanded", r.empirical_aaa_expanded},
          {"chain_rhs", r.chain_rhs},
          {"chain_holds", r.chain_holds},
          {"assumption2_violation_fraction", r.assumption2_violation_fraction}};
}

nlohmann::json to_json(const RegionReport& r) {
  return {{"M_sgd", r.M_sgd},
          {"M_aaa", r.M_aaa},
          {"mean_weight", r.mean_weight},
          {"min_weight", r.min_weight},
          {"min_sigma", r.min_sigma},
          {"frac_h_below_one", r.frac_h_below_one},
          {"frac_h_below_clean_grad", r.frac_h_below_clean_grad},
          {"assumption2_violation_fraction", r.assumption2_violation_fraction},
          {"outliers_downweighted", r.outliers_downweighted},
          {"n_outliers", r.n_outliers}};
}

nlohmann::json to_json(const StepSizeReport& r) {
  return {{"L", r.L},         {"mu", r.mu},           {"f_star_clean", r.f_star_clean},
          {"delta", r.delta}, {"eta_sgd", r.eta_sgd}, {"eta_aaa", r.eta_aaa}};
}

}  // namespace unirobust
