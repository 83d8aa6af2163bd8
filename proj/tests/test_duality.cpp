#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "unirobust/duality.hpp"
#include "unirobust/errors.hpp"
#include "unirobust/kernels.hpp"

using namespace unirobust;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return g;
}

// min_u [u f + Phi(u)] by exhaustive search, written without the library oracle.
double brute_conjugate(const RobustKernel& k, double f, int grid) {
  double best = f + outlier_process(k, 1.0);
  for (int j = 1; j < grid; ++j) {
    const double u = static_cast<double>(j) / grid;
    best = std::min(best, u * f + outlier_process(k, u));
  }
  if (auto phi0 = outlier_process_at_zero(k)) best = std::min(best, *phi0);
  return best;
}

}  // namespace

TEST_SUITE("duality") {

TEST_CASE("Geman-McClure outlier process") {
  const RobustKernel gm(KernelKind::GemanMcClure, 1.0);
  CHECK(outlier_process(gm, 0.25) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(outlier_process_info(gm).form == OutlierProcessForm::GemanMcClure);
  CHECK(std::abs(outlier_process(gm, 1.0)) <= 1e-12);
}

TEST_CASE("Welsch outlier process at c = 2") {
  const RobustKernel w(KernelKind::WelschLeclerc, 2.0);
  const double expected = 2.0 * (1.0 - 0.5 + 0.5 * std::log(0.5));
  CHECK(outlier_process(w, 0.5) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(outlier_process(w, 0.5) == doctest::Approx(0.3069).epsilon(1e-3));
  CHECK(std::abs(outlier_process(w, 0.5) - outlier_process_numeric(w, 0.5)) <= 1e-10);
}

TEST_CASE("closed forms agree with the numeric composition") {
  for (auto kind : {KernelKind::GemanMcClure, KernelKind::WelschLeclerc, KernelKind::CauchyLorentzian}) {
    for (double c : {0.3, 1.0, 7.0}) {
      const RobustKernel k(kind, c);
      for (double u = 0.01; u < 1.0; u += 0.01) {
        INFO(k.id(), " u=", u);
        CHECK(std::abs(outlier_process(k, u) - outlier_process_numeric(k, u)) <= 1e-10 * std::max(1.0, c));
      }
    }
  }
}

TEST_CASE("outlier process vanishes at one and is nonnegative") {
  for (auto kind : kAllKernelKinds) {
    const RobustKernel k(kind, 1.5);
    if (!k.supports_duality()) {
      CHECK_THROWS_AS(outlier_process(k, 0.5), UnsupportedOperation);
      continue;
    }
    INFO(k.id());
    if (k.value(0.0) == 0.0) CHECK(std::abs(outlier_process(k, 1.0)) <= 1e-12);
    for (double u : {1e-6, 1e-3, 0.2, 0.5, 0.9, 1.0}) CHECK(outlier_process(k, u) >= -1e-12);
  }
  CHECK_THROWS_AS(outlier_process(RobustKernel(KernelKind::GemanMcClure), 0.0), DomainError);
  CHECK_THROWS_AS(outlier_process(RobustKernel(KernelKind::GemanMcClure), 1.1), DomainError);
}

TEST_CASE("symmetric cross entropy is outside the duality") {
  const RobustKernel sce(KernelKind::SymmetricCE);
  CHECK_THROWS_AS(outlier_process(sce, 0.5), UnsupportedOperation);
  CHECK_THROWS_AS(duality_residual(sce, 1.0), UnsupportedOperation);
}

TEST_CASE("duality residual examples") {
  CHECK(duality_residual(RobustKernel(KernelKind::GemanMcClure, 1.0), 1.0) < 1e-10);
  CHECK(duality_residual(RobustKernel(KernelKind::CauchyLorentzian, 1.0), 1e-3) < 1e-10);
  CHECK(duality_residual(RobustKernel(KernelKind::WelschLeclerc, 3.0), 100.0) < 1e-8);
}

TEST_CASE("duality residual on a log grid") {
  for (auto kind : {KernelKind::GemanMcClure, KernelKind::WelschLeclerc, KernelKind::CauchyLorentzian,
                    KernelKind::GeneralizedCE, KernelKind::MeanError, KernelKind::TaylorCE}) {
    for (double c : {0.5, 1.0, 4.0}) {
      const RobustKernel k(kind, c);
      for (double r : log_grid(1e-3 * c, 1e3 * c, 60)) {
        INFO(k.id(), " r=", r);
        CHECK(duality_residual(k, r) <= 1e-8);
      }
    }
  }
}

TEST_CASE("penalized argmin examples") {
  const RobustKernel gm(KernelKind::GemanMcClure, 1.0);
  CHECK(std::abs(penalized_argmin_oracle(gm, 1.0, 100000) - 0.25) <= 1e-5);
  for (auto kind : kAllKernelKinds) {
    const RobustKernel k(kind);
    if (!k.supports_duality() || k.value(0.0) != 0.0) continue;
    CHECK(penalized_argmin_oracle(k, 0.0, 1000) == 1.0);
  }
  CHECK(penalized_argmin_oracle(RobustKernel(KernelKind::LinearTruncated, 1.0), 2.0, 1000) == 0.0);
  CHECK(penalized_argmin_oracle(RobustKernel(KernelKind::LinearTruncated, 1.0), 0.5, 1000) == 1.0);
  CHECK_THROWS(penalized_argmin_oracle(gm, 1.0, 999));
}

TEST_CASE("grid argmin matches the analytic weight") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> logc(-1.0, 1.0), logf(-2.0, 2.0);
  const std::vector<KernelKind> kinds{KernelKind::GemanMcClure, KernelKind::WelschLeclerc,
                                      KernelKind::CauchyLorentzian, KernelKind::Charbonnier,
                                      KernelKind::GeneralizedCE, KernelKind::MeanError};
  const int grid = 20000;
  for (int trial = 0; trial < 30; ++trial) {
    const RobustKernel k(kinds[trial % kinds.size()], std::pow(10.0, logc(rng)));
    const double f = std::pow(10.0, logf(rng)) * k.c();
    INFO(k.id(), " f=", f);
    CHECK(std::abs(penalized_argmin_oracle(k, f, grid) - k.weight(f)) <= 2.0 / grid);
  }
}

TEST_CASE("truncated outlier process recovers min(r, c)") {
  const RobustKernel tl(KernelKind::LinearTruncated, 2.0);
  for (double r : {0.0, 0.5, 1.9, 2.0, 2.1, 10.0}) {
    const double at0 = *outlier_process_at_zero(tl);
    const double at1 = r + outlier_process(tl, 1.0);
    CHECK(std::min(at0, at1) == doctest::Approx(tl.value(r)));
  }
  CHECK(outlier_process(tl, 0.25) == doctest::Approx(1.5));
}

TEST_CASE("bounded and unbounded kernels at u = 0") {
  CHECK(*outlier_process_at_zero(RobustKernel(KernelKind::GemanMcClure, 2.0)) == doctest::Approx(2.0));
  CHECK(*outlier_process_at_zero(RobustKernel(KernelKind::WelschLeclerc, 3.0)) == doctest::Approx(3.0));
  CHECK_FALSE(outlier_process_at_zero(RobustKernel(KernelKind::CauchyLorentzian)).has_value());
}

TEST_CASE("dual objective minimum equals the primal objective") {
  std::mt19937_64 rng(99);
  std::exponential_distribution<double> dist(0.5);
  std::vector<double> losses(50);
  for (auto& f : losses) f = dist(rng);
  for (auto kind : {KernelKind::GemanMcClure, KernelKind::WelschLeclerc, KernelKind::LinearTruncated}) {
    const RobustKernel k(kind, 1.0);
    const auto m = dual_objective_minimum(k, losses, 100000);
    INFO(k.id());
    CHECK(std::abs(m.dual_value - m.primal_value) <= 1e-6);
    double primal = 0.0;
    for (double f : losses) primal += k.value(f);
    CHECK(m.primal_value == doctest::Approx(primal / losses.size()).epsilon(1e-12));
  }
  // Independent brute force on a handful of points.
  const RobustKernel gm(KernelKind::GemanMcClure, 1.0);
  for (double f : {0.1, 1.0, 5.0}) CHECK(std::abs(brute_conjugate(gm, f, 100000) - gm.value(f)) <= 1e-6);
}

}  // TEST_SUITE
