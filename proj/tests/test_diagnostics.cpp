#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "unirobust/diagnostics.hpp"
#include "unirobust/errors.hpp"
#include "unirobust/parallel.hpp"

using namespace unirobust;

namespace {

std::vector<double> random_w(std::size_t d, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> w(d);
  for (auto& v : w) v = nd(rng);
  return w;
}

double sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("outlier-free instance has zero outlier statistics") {
  const auto p = gen_linear_regression({.n = 300, .k = 4, .lambda = 0.0, .seed = 1});
  std::mt19937_64 rng(2);
  const auto w = random_w(p.dim(), rng);
  const RobustKernel gm(KernelKind::GemanMcClure);
  const auto v = variance_report(p, w, gm, 1.0, 1e-2);
  CHECK(v.bound_sgd == 0.0);
  CHECK(v.bound_aaa == 0.0);
  CHECK(v.outlier_mean_norm == 0.0);
  // Independent inlier variance: (1/n) sum ||eta g_i - eta gbar||^2.
  std::vector<double> gbar(p.dim(), 0.0);
  std::vector<std::vector<double>> g(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) {
    g[i] = sample_grad(p, w, i);
    for (std::size_t j = 0; j < p.dim(); ++j) gbar[j] += g[i][j] / p.n();
  }
  double var = 0.0;
  for (const auto& gi : g) {
    for (std::size_t j = 0; j < p.dim(); ++j) var += 1e-4 * (gi[j] - gbar[j]) * (gi[j] - gbar[j]);
  }
  CHECK(v.empirical_sgd == doctest::Approx(var / p.n()).epsilon(1e-10));
  const auto r = region_report(p, w, gm, 1.0);
  CHECK(r.M_sgd == 0.0);
  CHECK(r.M_aaa == 0.0);
  CHECK(r.n_outliers == 0);
}

TEST_CASE("variance entries agree when computed two ways") {
  std::mt19937_64 rng(3);
  for (const auto& p : {gen_linear_regression({.n = 500, .k = 6, .lambda = 0.3, .seed = 5}),
                        gen_blob_classification({.n = 300, .k = 4, .K = 3, .lambda = 0.3, .seed = 5})}) {
    for (int t = 0; t < 10; ++t) {
      const auto w = random_w(p.dim(), rng);
      const auto v = variance_report(p, w, RobustKernel(KernelKind::WelschLeclerc), 2.0, 7e-3);
      const double scale = std::max(1e-30, v.empirical_sgd);
      CHECK(std::abs(v.empirical_sgd - v.empirical_sgd_expanded) <= 1e-10 * std::max(1.0, scale));
      CHECK(std::abs(v.empirical_aaa - v.empirical_aaa_expanded) <= 1e-10 * std::max(1.0, v.empirical_aaa));
      CHECK(v.bound_aaa <= v.bound_sgd);
      CHECK(v.empirical_sgd >= 0.0);
      CHECK(v.empirical_aaa >= 0.0);
    }
  }
}

TEST_CASE("chain inequality holds at the generating weights") {
  const auto p = gen_linear_regression({.n = 1000, .k = 10, .lambda = 0.3, .seed = 7});
  const auto v = variance_report(p, p.w_star, RobustKernel(KernelKind::GemanMcClure), 1.0, 7e-4);
  CHECK(v.empirical_sgd <= v.chain_rhs * (1 + 1e-12));
  CHECK(v.chain_holds);
}

TEST_CASE("region statistics") {
  const auto p = gen_linear_regression({.n = 1000, .k = 10, .lambda = 0.3, .seed = 7});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> logc(-2.0, 3.0);
  for (int t = 0; t < 50; ++t) {
    const auto w = random_w(p.dim(), rng);
    const double c = std::pow(10.0, logc(rng));
    const auto r = region_report(p, w, RobustKernel(KernelKind::GemanMcClure), c);
    CHECK(r.M_aaa <= r.M_sgd);
    if (r.outliers_downweighted > 0) CHECK(r.M_aaa < r.M_sgd);
    CHECK(r.n_outliers == 300);
    CHECK(r.min_weight <= r.mean_weight);
  }
}

TEST_CASE("region statistic independent oracle") {
  const auto p = gen_linear_regression({.n = 200, .k = 3, .lambda = 0.25, .seed = 17});
  const std::vector<double> w{0.3, -1.0, 0.5};
  const RobustKernel k(KernelKind::CauchyLorentzian, 2.0);
  double ms = 0.0, ma = 0.0;
  std::size_t no = 0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    if (!p.train[i].is_outlier) continue;
    ++no;
    const double h2 = sq(oracle_outlier_gradient(p, w, i));
    const double u = k.weight(sample_loss(p, w, i));
    ms += h2;
    ma += u * u * h2;
  }
  const auto r = region_report(p, w, RobustKernel(KernelKind::CauchyLorentzian, 1.0), 2.0);
  CHECK(r.M_sgd == doctest::Approx(ms / no).epsilon(1e-12));
  CHECK(r.M_aaa == doctest::Approx(ma / no).epsilon(1e-12));
  CHECK(stale_region_statistic(p, w, w, RobustKernel(KernelKind::CauchyLorentzian), 2.0) ==
        doctest::Approx(r.M_aaa).epsilon(1e-12));
}

TEST_CASE("truncated gate below every outlier loss") {
  const auto p = gen_linear_regression({.n = 1000, .k = 10, .lambda = 0.3, .seed = 7});
  const std::vector<double> w(p.dim(), 0.0);
  const auto f = par::losses(p, w);
  double min_out = INFINITY;
  for (std::size_t i = 0; i < p.n(); ++i) {
    if (p.train[i].is_outlier) min_out = std::min(min_out, f[i]);
  }
  const RobustKernel tl(KernelKind::LinearTruncated);
  const auto r = region_report(p, w, tl, min_out * (1 - 1e-9));
  CHECK(r.M_aaa == 0.0);
  CHECK(r.M_sgd > 0.0);

  std::vector<double> cs;
  for (int j = 0; j < 40; ++j) cs.push_back(min_out * std::pow(10.0, 0.1 * j - 1));
  double prev = -1.0;
  for (double c : cs) {
    const double m = region_report(p, w, tl, c).M_aaa;
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("step size thresholds on a regression instance") {
  const auto p = gen_linear_regression({.n = 400, .k = 5, .lambda = 0.3, .seed = 4});
  const auto s = step_size_thresholds(p, 1e-2, 10.0, 2.0, 0.5, 0.9);
  double L = 0.0;
  Eigen::MatrixXd X(p.n(), p.k);
  Eigen::VectorXd y(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) {
    double nrm = 0.0;
    for (std::size_t j = 0; j < p.k; ++j) {
      X(i, j) = p.train[i].x[j];
      nrm += p.train[i].x[j] * p.train[i].x[j];
    }
    y(i) = p.train[i].clean_label;
    L = std::max(L, 2 * nrm);
  }
  CHECK(s.L == doctest::Approx(L).epsilon(1e-12));
  const Eigen::MatrixXd G = (2.0 / p.n()) * X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  CHECK(s.mu == doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-8));
  const Eigen::VectorXd wls = X.colPivHouseholderQr().solve(y);
  CHECK(s.f_star_clean == doctest::Approx((X * wls - y).squaredNorm() / p.n()).epsilon(1e-8));
  CHECK(s.eta_sgd > 0.0);
  CHECK(s.eta_aaa > 0.0);
  CHECK_THROWS_AS(step_size_thresholds(gen_blob_classification({.n = 30, .seed = 1}), 1e-2, 1, 1, 1, 1),
                  UnsupportedOperation);
}

TEST_CASE("landscape endpoints, constancy and convexity") {
  const auto p = gen_linear_regression({.n = 300, .k = 4, .lambda = 0.3, .seed = 6});
  std::mt19937_64 rng(6);
  const auto wa = random_w(p.dim(), rng), wb = random_w(p.dim(), rng);
  std::vector<double> kap;
  for (int i = 0; i <= 60; ++i) kap.push_back(-0.25 + 1.5 * i / 60.0);
  for (auto kind : {LandscapeLoss::observed, LandscapeLoss::clean}) {
    const auto curve = landscape_1d(p, wa, wb, kap, kind);
    for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
      CHECK(curve[i - 1].loss - 2 * curve[i].loss + curve[i + 1].loss >= -1e-9);
    }
    const std::vector<double> ends{0.0, 1.0};
    const auto e = landscape_1d(p, wa, wb, ends, kind);
    const double fa = kind == LandscapeLoss::observed ? par::mean_loss(p, wa) : par::mean_clean_loss(p, wa);
    const double fb = kind == LandscapeLoss::observed ? par::mean_loss(p, wb) : par::mean_clean_loss(p, wb);
    CHECK(e[0].loss == fa);
    CHECK(e[1].loss == fb);
    const auto flat = landscape_1d(p, wa, wa, kap, kind);
    for (const auto& pt : flat) CHECK(pt.loss == doctest::Approx(flat[0].loss).epsilon(1e-14));
  }
  CHECK_THROWS_AS(landscape_1d(p, wa, std::vector<double>(2, 0.0), kap, LandscapeLoss::observed), ShapeError);
}

TEST_CASE("finite difference checks") {
  const auto p = gen_linear_regression({.n = 30, .k = 5, .lambda = 0.3, .seed = 2});
  std::mt19937_64 rng(1);
  const auto w = random_w(p.dim(), rng);
  for (std::size_t i = 0; i < p.n(); ++i) CHECK(finite_diff_check(p, w, i, 1e-6) < 1e-5);
  const auto q = gen_blob_classification({.n = 30, .k = 5, .K = 3, .lambda = 0.3, .seed = 2});
  const auto v = random_w(q.dim(), rng, 0.3);
  for (std::size_t i = 0; i < q.n(); ++i) CHECK(finite_diff_check(q, v, i, 1e-6) < 1e-5);
  const auto z = gen_linear_regression({.n = 10, .k = 3, .lambda = 0.0, .noise_sd = 0.0, .seed = 2});
  CHECK(finite_diff_check(z, z.w_star, 0, 1e-6) < 1e-8);
}

TEST_CASE("reports serialize") {
  const auto p = gen_linear_regression({.n = 100, .k = 3, .lambda = 0.2, .seed = 2});
  const auto w = std::vector<double>(3, 0.1);
  const RobustKernel gm(KernelKind::GemanMcClure);
  CHECK(to_json(variance_report(p, w, gm, 1.0, 1e-3)).contains("bound_sgd"));
  CHECK(to_json(region_report(p, w, gm, 1.0)).contains("M_aaa"));
  CHECK(to_json(step_size_thresholds(p, 1e-2, 1, 1, 1, 0.9)).contains("eta_aaa"));
}

}  // TEST_SUITE
