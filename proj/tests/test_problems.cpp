#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "unirobust/errors.hpp"
#include "unirobust/problems.hpp"

using namespace unirobust;

namespace {

ProblemInstance single_regression_sample(std::vector<double> x, double observed, double clean,
                                         double perturbation) {
  ProblemInstance p;
  p.kind = ProblemKind::LinearRegressionMSE;
  p.k = x.size();
  Sample s{std::move(x), observed, clean, observed != clean, perturbation};
  p.train.push_back(s);
  p.test.push_back(s);
  return p;
}

double fd_max_rel(const ProblemInstance& p, std::vector<double> w, std::size_t i) {
  const auto g = sample_grad(p, w, i);
  double worst = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double h = 1e-6, w0 = w[j];
    w[j] = w0 + h;
    const double fp = sample_loss(p, w, i);
    w[j] = w0 - h;
    const double fm = sample_loss(p, w, i);
    w[j] = w0;
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd) < 1e-8 ? std::abs(g[j] - fd) : std::abs(g[j] - fd) / std::abs(fd));
  }
  return worst;
}

}  // namespace

TEST_SUITE("problems") {

TEST_CASE("regression has exactly round(lambda n) outliers") {
  const auto p = gen_linear_regression({.n = 1000, .k = 10, .lambda = 0.3, .noise_sd = 0.1, .outlier_sd = 5.0, .seed = 7});
  CHECK(p.outlier_count() == 300);
  CHECK(p.n() == 1000);
  CHECK(p.test.size() == 200);
  for (const auto& s : p.test) CHECK_FALSE(s.is_outlier);
  for (const auto& s : p.train) {
    for (double v : s.x) CHECK((v > 0.0 && v <= 1.0));
    if (!s.is_outlier) {
      CHECK(s.observed_label == s.clean_label);
      CHECK(s.perturbation == 0.0);
    } else {
      CHECK(s.observed_label == s.clean_label + s.perturbation);
    }
  }
}

TEST_CASE("outlier-free instances") {
  const auto p = gen_linear_regression({.lambda = 0.0, .seed = 3});
  CHECK(p.outlier_count() == 0);
  const auto q = gen_blob_classification({.lambda = 0.0, .seed = 3});
  CHECK(q.outlier_count() == 0);
  for (const auto& s : q.train) CHECK(s.observed_label == s.clean_label);
}

TEST_CASE("generators are deterministic") {
  CHECK(gen_linear_regression({.lambda = 0.2, .seed = 42}) == gen_linear_regression({.lambda = 0.2, .seed = 42}));
  CHECK_FALSE(gen_linear_regression({.lambda = 0.2, .seed = 42}) == gen_linear_regression({.lambda = 0.2, .seed = 43}));
  CHECK(gen_blob_classification({.lambda = 0.4, .seed = 1}) == gen_blob_classification({.lambda = 0.4, .seed = 1}));
}

TEST_CASE("outlier fraction domain") {
  CHECK_THROWS_AS(gen_linear_regression({.lambda = 1.0}), DomainError);
  CHECK_THROWS_AS(gen_blob_classification({.lambda = 1.2}), DomainError);
  CHECK_THROWS_AS(gen_blob_classification({.K = 1}), ParameterDomainError);
}

TEST_CASE("blob label noise") {
  const auto p = gen_blob_classification({.n = 600, .k = 5, .K = 3, .lambda = 0.4, .seed = 11});
  std::size_t changed = 0;
  for (const auto& s : p.train) changed += s.observed_label != s.clean_label;
  CHECK(changed == 240);
  CHECK(p.outlier_count() == 240);
}

TEST_CASE("corrupted labels are uniform over the wrong classes") {
  const std::size_t K = 4;
  const auto p = gen_blob_classification({.n = 20000, .k = 4, .K = K, .lambda = 0.5, .seed = 5});
  std::vector<std::size_t> shift_count(K, 0);
  std::size_t m = 0;
  for (const auto& s : p.train) {
    if (!s.is_outlier) continue;
    ++m;
    const auto d = (static_cast<std::size_t>(s.observed_label) + K - static_cast<std::size_t>(s.clean_label)) % K;
    ++shift_count[d];
  }
  CHECK(shift_count[0] == 0);
  const double q = 1.0 / (K - 1);
  const double se = std::sqrt(q * (1 - q) / m);
  for (std::size_t d = 1; d < K; ++d) {
    CHECK(std::abs(static_cast<double>(shift_count[d]) / m - q) <= 3 * se);
  }
}

TEST_CASE("regression loss examples") {
  auto p = gen_linear_regression({.n = 50, .k = 4, .lambda = 0.0, .noise_sd = 0.0, .seed = 9});
  for (std::size_t i = 0; i < p.n(); ++i) {
    CHECK(sample_loss(p, p.w_star, i) <= 1e-24);
    for (double g : sample_grad(p, p.w_star, i)) CHECK(std::abs(g) <= 1e-12);
  }
  CHECK(test_metric(p, p.w_star) <= 1e-12);
  const auto q = single_regression_sample({0.3, 0.7}, 2.0, 2.0, 0.0);
  CHECK(sample_loss(q, std::vector<double>{0.0, 0.0}, 0) == 4.0);
  CHECK_THROWS_AS(sample_loss(q, std::vector<double>{0.0}, 0), ShapeError);
}

TEST_CASE("uniform logits give ln K") {
  ProblemInstance p;
  p.kind = ProblemKind::SoftmaxClassificationCE;
  p.k = 4;
  p.K = 4;
  p.train.push_back(Sample{{0.5, -1.0, 2.0, 0.1}, 2.0, 2.0, false, 0.0});
  p.test = p.train;
  CHECK(sample_loss(p, std::vector<double>(16, 0.0), 0) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("confident correct prediction has vanishing gradient") {
  ProblemInstance p;
  p.kind = ProblemKind::SoftmaxClassificationCE;
  p.k = 2;
  p.K = 2;
  p.train.push_back(Sample{{1.0, 0.0}, 1.0, 1.0, false, 0.0});
  p.test = p.train;
  std::vector<double> w{-50.0, 50.0, 0.0, 0.0};
  double norm = 0.0;
  for (double g : sample_grad(p, w, 0)) norm += g * g;
  CHECK(std::sqrt(norm) < 1e-30);
  w = {-1e6, 1e6, 0.0, 0.0};
  CHECK(std::isfinite(sample_loss(p, w, 0)));
  w = {1e6, -1e6, 0.0, 0.0};
  CHECK(sample_loss(p, w, 0) == doctest::Approx(2e6));
}

TEST_CASE("clean loss oracle") {
  const auto q = single_regression_sample({0.4, 0.9}, 4.0, 1.0, 3.0);
  const std::vector<double> w0{0.0, 0.0};
  CHECK(oracle_clean_loss(q, w0, 0) == 1.0);
  CHECK(sample_loss(q, w0, 0) == 16.0);

  const auto p = gen_linear_regression({.n = 300, .k = 3, .lambda = 0.3, .seed = 2});
  const std::vector<double> w{0.1, -0.2, 0.3};
  for (std::size_t i = 0; i < p.n(); ++i) {
    if (p.train[i].is_outlier) continue;
    CHECK(oracle_clean_loss(p, w, i) == sample_loss(p, w, i));
    CHECK(oracle_clean_grad(p, w, i) == sample_grad(p, w, i));
  }
  const auto z = gen_linear_regression({.n = 100, .k = 3, .lambda = 0.0, .seed = 2});
  double a = 0, b = 0;
  for (std::size_t i = 0; i < z.n(); ++i) {
    a += oracle_clean_loss(z, w, i);
    b += sample_loss(z, w, i);
  }
  CHECK(a == b);
}

TEST_CASE("outlier gradient decomposition") {
  const auto q = single_regression_sample({1.0, 0.0, 0.0}, 4.0, 1.0, 3.0);
  for (const auto& w : {std::vector<double>{0, 0, 0}, std::vector<double>{1.5, -2, 7}}) {
    const auto h = oracle_outlier_gradient(q, w, 0);
    CHECK(h[0] == doctest::Approx(-6.0).epsilon(1e-14));
    CHECK(h[1] == 0.0);
    CHECK(h[2] == 0.0);
  }
  for (const auto& p : {gen_linear_regression({.n = 200, .k = 4, .lambda = 0.3, .seed = 4}),
                        gen_blob_classification({.n = 200, .k = 4, .K = 3, .lambda = 0.3, .seed = 4})}) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::vector<double> w(p.dim());
    for (auto& v : w) v = nd(rng);
    for (std::size_t i = 0; i < p.n(); ++i) {
      if (!p.train[i].is_outlier) {
        CHECK_THROWS_AS(oracle_outlier_gradient(p, w, i), DomainError);
        continue;
      }
      const auto g = sample_grad(p, w, i), gc = oracle_clean_grad(p, w, i), h = oracle_outlier_gradient(p, w, i);
      for (std::size_t j = 0; j < w.size(); ++j) CHECK(std::abs(g[j] - gc[j] - h[j]) <= 1e-12);
      if (p.kind == ProblemKind::LinearRegressionMSE) {
        for (std::size_t j = 0; j < w.size(); ++j) {
          CHECK(h[j] == doctest::Approx(-2.0 * p.train[i].perturbation * p.train[i].x[j]).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("gradients match central differences") {
  for (const auto& p : {gen_linear_regression({.n = 40, .k = 5, .lambda = 0.2, .seed = 8}),
                        gen_blob_classification({.n = 40, .k = 5, .K = 3, .lambda = 0.2, .seed = 8})}) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 0.5);
    std::vector<double> w(p.dim());
    for (auto& v : w) v = nd(rng);
    for (std::size_t i = 0; i < p.n(); ++i) CHECK(fd_max_rel(p, w, i) < 1e-5);
  }
}

TEST_CASE("test metric levels") {
  const auto p = gen_linear_regression({.n = 5000, .k = 10, .lambda = 0.0, .noise_sd = 0.1, .seed = 12});
  CHECK(std::abs(test_metric(p, p.w_star) - 0.1) <= 0.02);

  const auto q = gen_blob_classification({.n = 3000, .k = 5, .K = 3, .lambda = 0.0, .seed = 12});
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd;
  std::vector<double> w(q.dim());
  const int draws = 200;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < draws; ++r) {
    for (auto& v : w) v = nd(rng);
    const double a = test_metric(q, w);
    sum += a;
    sumsq += a * a;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sumsq / draws - mean * mean) / (draws - 1));
  CHECK(std::abs(mean - 1.0 / 3) <= 3 * se);
}

TEST_CASE("save and load round trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "unirobust_problem_io";
  std::filesystem::create_directories(dir);
  for (const auto& p : {gen_linear_regression({.n = 120, .k = 6, .lambda = 0.25, .seed = 31}),
                        gen_blob_classification({.n = 90, .k = 4, .K = 3, .lambda = 0.3, .seed = 31})}) {
    const auto stem = dir / std::string(to_string(p.kind));
    save_problem(p, stem);
    const auto q = load_problem(stem);
    CHECK(q.train == p.train);
    CHECK(q.test == p.test);
    CHECK(q.w_star == p.w_star);
    CHECK(q.lambda == p.lambda);
    CHECK(q.seed == p.seed);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("decimal formatting round trips") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
    CHECK(parse_double_exact(format_double(v)) == v);
  }
  CHECK_THROWS_AS(parse_double_exact("1.5x"), DomainError);
}

}  // TEST_SUITE
