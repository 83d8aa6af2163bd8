#include "unirobust/problems.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "unirobust/errors.hpp"

namespace unirobust {

std::string_view to_string(ProblemKind kind) {
  return kind == ProblemKind::LinearRegressionMSE ? "LinearRegressionMSE" : "SoftmaxClassificationCE";
}

ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "LinearRegressionMSE" || name == "regression" || name == "linear_regression") {
    return ProblemKind::LinearRegressionMSE;
  }
  if (name == "SoftmaxClassificationCE" || name == "classification" || name == "blobs") {
    return ProblemKind::SoftmaxClassificationCE;
  }
  throw ParameterDomainError("unknown problem kind '" + std::string(name) + "'");
}

std::size_t ProblemInstance::outlier_count() const {
  return static_cast<std::size_t>(
      std::count_if(train.begin(), train.end(), [](const Sample& s) { return s.is_outlier; }));
}

namespace {

void check_fraction(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    throw DomainError("outlier fraction must lie in [0, 1), got " + format_double(lambda));
  }
}

std::size_t test_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0) || !std::isfinite(fraction)) {
    throw ParameterDomainError("test_fraction must be positive");
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
}

// Uniform subset of size m from [0, n), returned sorted.
std::vector<std::size_t> choose_subset(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t j = 0; j < m; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, n - 1);
    std::swap(idx[j], idx[pick(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

ProblemInstance gen_linear_regression(const RegressionConfig& cfg) {
  check_fraction(cfg.lambda);
  if (cfg.n < 1 || cfg.k < 1) throw ParameterDomainError("regression requires n >= 1 and k >= 1");
  if (!(cfg.noise_sd >= 0.0) || !(cfg.outlier_sd >= 0.0)) {
    throw ParameterDomainError("noise_sd and outlier_sd must be nonnegative");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  auto feature = [&] { return 1.0 - unif(rng); };  // (0, 1]

  ProblemInstance p;
  p.kind = ProblemKind::LinearRegressionMSE;
  p.k = cfg.k;
  p.K = 1;
  p.lambda = cfg.lambda;
  p.seed = cfg.seed;
  p.w_star.resize(cfg.k);
  for (auto& v : p.w_star) v = std_normal(rng);

  auto draw = [&](Sample& s) {
    s.x.resize(cfg.k);
    for (auto& v : s.x) v = feature();
    s.clean_label = dot(p.w_star, s.x) + cfg.noise_sd * std_normal(rng);
    s.observed_label = s.clean_label;
  };
  p.train.resize(cfg.n);
  for (auto& s : p.train) draw(s);

  const auto n_out = static_cast<std::size_t>(std::llround(cfg.lambda * static_cast<double>(cfg.n)));
  for (std::size_t i : choose_subset(cfg.n, n_out, rng)) {
    Sample& s = p.train[i];
    s.is_outlier = true;
    s.perturbation = cfg.outlier_sd * std_normal(rng);
    s.observed_label = s.clean_label + s.perturbation;
  }

  p.test.resize(test_size(cfg.n, cfg.test_fraction));
  for (auto& s : p.test) draw(s);

  p.generator = {{"kind", "linear_regression"}, {"n", cfg.n},
                 {"k", cfg.k},                  {"lambda", cfg.lambda},
                 {"noise_sd", cfg.noise_sd},    {"outlier_sd", cfg.outlier_sd},
                 {"test_fraction", cfg.test_fraction}, {"seed", cfg.seed}};
  return p;
}

ProblemInstance gen_blob_classification(const ClassificationConfig& cfg) {
  check_fraction(cfg.lambda);
  if (cfg.K < 2) throw ParameterDomainError("classification requires K >= 2");
  if (cfg.k < cfg.K) throw ParameterDomainError("blob generator requires k >= K");
  if (cfg.n < 1) throw ParameterDomainError("classification requires n >= 1");
  if (!(cfg.separation >= 0.0)) throw ParameterDomainError("separation must be nonnegative");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cls(0, cfg.K - 1);

  ProblemInstance p;
  p.kind = ProblemKind::SoftmaxClassificationCE;
  p.k = cfg.k;
  p.K = cfg.K;
  p.lambda = cfg.lambda;
  p.seed = cfg.seed;
  const double offset = cfg.separation / std::sqrt(2.0);
  p.w_star.assign(cfg.K * cfg.k, 0.0);
  for (std::size_t c = 0; c < cfg.K; ++c) p.w_star[c * cfg.k + c] = offset;

  auto draw = [&](Sample& s) {
    const std::size_t y = cls(rng);
    s.x.resize(cfg.k);
    for (std::size_t j = 0; j < cfg.k; ++j) s.x[j] = p.w_star[y * cfg.k + j] + std_normal(rng);
    s.clean_label = static_cast<double>(y);
    s.observed_label = s.clean_label;
  };
  p.train.resize(cfg.n);
  for (auto& s : p.train) draw(s);

  const auto n_out = static_cast<std::size_t>(std::llround(cfg.lambda * static_cast<double>(cfg.n)));
  std::uniform_int_distribution<std::size_t> shift(1, cfg.K - 1);
  for (std::size_t i : choose_subset(cfg.n, n_out, rng)) {
    Sample& s = p.train[i];
    s.is_outlier = true;
    const auto y = static_cast<std::size_t>(s.clean_label);
    s.observed_label = static_cast<double>((y + shift(rng)) % cfg.K);
  }

  p.test.resize(test_size(cfg.n, cfg.test_fraction));
  for (auto& s : p.test) draw(s);

  p.generator = {{"kind", "blobs"},         {"n", cfg.n},
                 {"k", cfg.k},              {"K", cfg.K},
                 {"lambda", cfg.lambda},    {"separation", cfg.separation},
                 {"test_fraction", cfg.test_fraction}, {"seed", cfg.seed}};
  return p;
}

// ---------------------------------------------------------------------------
// Model

void check_dim(const ProblemInstance& p, std::span<const double> w) {
  if (w.size() != p.dim()) {
    throw ShapeError("weight vector has length " + std::to_string(w.size()) + ", model expects " +
                     std::to_string(p.dim()));
  }
}

namespace {

void check_index(const ProblemInstance& p, std::size_t i) {
  if (i >= p.train.size()) throw ShapeError("sample index out of range");
}

std::size_t class_index(double label, std::size_t K) {
  const auto y = static_cast<std::size_t>(label);
  if (!(label >= 0.0) || y >= K || static_cast<double>(y) != label) {
    throw DomainError("invalid class label " + format_double(label));
  }
  return y;
}

// Fills z with logits and returns log-sum-exp.
double logits(std::size_t K, std::span<const double> x, std::span<const double> w, double* z) {
  for (std::size_t c = 0; c < K; ++c) z[c] = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    const double* row = w.data() + j * K;
    for (std::size_t c = 0; c < K; ++c) z[c] += xj * row[c];
  }
  const double m = *std::max_element(z, z + K);
  double s = 0.0;
  for (std::size_t c = 0; c < K; ++c) s += std::exp(z[c] - m);
  return m + std::log(s);
}

constexpr std::size_t kStackClasses = 64;

}  // namespace

double model_loss(ProblemKind kind, std::size_t K, std::span<const double> x, double label,
                  std::span<const double> w) {
  if (kind == ProblemKind::LinearRegressionMSE) {
    const double r = label - dot(w, x);
    return r * r;
  }
  const std::size_t y = class_index(label, K);
  double stack[kStackClasses];
  std::vector<double> heap;
  double* z = stack;
  if (K > kStackClasses) {
    heap.resize(K);
    z = heap.data();
  }
  const double lse = logits(K, x, w, z);
  return std::max(lse - z[y], 0.0);
}

double model_loss_grad_accumulate(ProblemKind kind, std::size_t K, std::span<const double> x,
                                  double label, std::span<const double> w, double scale,
                                  std::span<double> out) {
  if (kind == ProblemKind::LinearRegressionMSE) {
    const double r = label - dot(w, x);
    const double g = scale * (-2.0 * r);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] += g * x[j];
    return r * r;
  }
  const std::size_t y = class_index(label, K);
  double stack[kStackClasses];
  std::vector<double> heap;
  double* z = stack;
  if (K > kStackClasses) {
    heap.resize(K);
    z = heap.data();
  }
  const double lse = logits(K, x, w, z);
  const double loss = std::max(lse - z[y], 0.0);
  for (std::size_t c = 0; c < K; ++c) z[c] = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double xj = scale * x[j];
    double* row = out.data() + j * K;
    for (std::size_t c = 0; c < K; ++c) row[c] += xj * z[c];
  }
  return loss;
}

double sample_loss(const ProblemInstance& p, std::span<const double> w, std::size_t i) {
  check_dim(p, w);
  check_index(p, i);
  return model_loss(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w);
}

std::vector<double> sample_grad(const ProblemInstance& p, std::span<const double> w, std::size_t i) {
  check_dim(p, w);
  check_index(p, i);
  std::vector<double> g(p.dim(), 0.0);
  model_loss_grad_accumulate(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w, 1.0, g);
  return g;
}

double oracle_clean_loss(const ProblemInstance& p, std::span<const double> w, std::size_t i) {
  check_dim(p, w);
  check_index(p, i);
  return model_loss(p.kind, p.K, p.train[i].x, p.train[i].clean_label, w);
}

std::vector<double> oracle_clean_grad(const ProblemInstance& p, std::span<const double> w,
                                      std::size_t i) {
  check_dim(p, w);
  check_index(p, i);
  std::vector<double> g(p.dim(), 0.0);
  model_loss_grad_accumulate(p.kind, p.K, p.train[i].x, p.train[i].clean_label, w, 1.0, g);
  return g;
}

std::vector<double> oracle_outlier_gradient(const ProblemInstance& p, std::span<const double> w,
                                            std::size_t i) {
  check_dim(p, w);
  check_index(p, i);
  if (!p.train[i].is_outlier) throw DomainError("h_i is undefined for inlier " + std::to_string(i));
  auto g = sample_grad(p, w, i);
  const auto gc = oracle_clean_grad(p, w, i);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] -= gc[j];
  return g;
}

double test_metric(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  if (p.test.empty()) throw DomainError("test set is empty");
  if (p.kind == ProblemKind::LinearRegressionMSE) {
    double s = 0.0;
    for (const auto& t : p.test) s += model_loss(p.kind, p.K, t.x, t.clean_label, w);
    return std::sqrt(s / static_cast<double>(p.test.size()));
  }
  std::vector<double> z(p.K);
  std::size_t correct = 0;
  for (const auto& t : p.test) {
    logits(p.K, t.x, w, z.data());
    const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == static_cast<std::size_t>(t.clean_label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(p.test.size());
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double_exact(std::string_view s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    // from_chars rejects "inf"/"nan" spellings produced by some writers; fall back to strtod.
    std::string tmp(s);
    char* e = nullptr;
    v = std::strtod(tmp.c_str(), &e);
    if (e != tmp.c_str() + tmp.size()) throw DomainError("bad number '" + tmp + "'");
  }
  return v;
}

nlohmann::json problem_metadata(const ProblemInstance& p) {
  return {{"kind", std::string(to_string(p.kind))},
          {"n", p.train.size()},
          {"n_test", p.test.size()},
          {"k", p.k},
          {"K", p.K},
          {"lambda", p.lambda},
          {"seed", p.seed},
          {"w_star", p.w_star},
          {"generator", p.generator}};
}

namespace {

void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples, std::size_t k) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < k; ++j) out << 'x' << j << ',';
  out << kProblemCsvLabelColumns << '\n';
  for (const auto& s : samples) {
    for (double v : s.x) out << format_double(v) << ',';
    out << format_double(s.observed_label) << ',' << format_double(s.clean_label) << ','
        << (s.is_outlier ? 1 : 0) << ',' << format_double(s.perturbation) << '\n';
  }
}

std::vector<Sample> read_samples(const std::filesystem::path& path, std::size_t k) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<Sample> out;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    fields.clear();
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != k + 4) throw ShapeError("malformed row in " + path.string());
    Sample s;
    s.x.resize(k);
    for (std::size_t j = 0; j < k; ++j) s.x[j] = parse_double_exact(fields[j]);
    s.observed_label = parse_double_exact(fields[k]);
    s.clean_label = parse_double_exact(fields[k + 1]);
    s.is_outlier = fields[k + 2] == "1";
    s.perturbation = parse_double_exact(fields[k + 3]);
    out.push_back(std::move(s));
  }
  return out;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.string() + suffix;
}

}  // namespace

void save_problem(const ProblemInstance& p, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  write_samples(with_suffix(stem, ".train.csv"), p.train, p.k);
  write_samples(with_suffix(stem, ".test.csv"), p.test, p.k);
  std::ofstream meta(with_suffix(stem, ".json"), std::ios::binary);
  meta << problem_metadata(p).dump(2) << '\n';
}

ProblemInstance load_problem(const std::filesystem::path& stem) {
  std::ifstream meta_in(with_suffix(stem, ".json"), std::ios::binary);
  if (!meta_in) throw std::runtime_error("cannot read " + with_suffix(stem, ".json").string());
  const auto meta = nlohmann::json::parse(meta_in);
  ProblemInstance p;
  p.kind = parse_problem_kind(meta.at("kind").get<std::string>());
  p.k = meta.at("k").get<std::size_t>();
  p.K = meta.at("K").get<std::size_t>();
  p.lambda = meta.at("lambda").get<double>();
  p.seed = meta.at("seed").get<std::uint64_t>();
  p.w_star = meta.at("w_star").get<std::vector<double>>();
  p.generator = meta.value("generator", nlohmann::json::object());
  p.train = read_samples(with_suffix(stem, ".train.csv"), p.k);
  p.test = read_samples(with_suffix(stem, ".test.csv"), p.k);
  if (p.train.size() != meta.at("n").get<std::size_t>()) throw ShapeError("train row count mismatch");
  if (p.kind == ProblemKind::SoftmaxClassificationCE) {
    for (const auto* set : {&p.train, &p.test}) {
      for (const auto& s : *set) {
        class_index(s.observed_label, p.K);
        class_index(s.clean_label, p.K);
      }
    }
  }
  return p;
}

}  // namespace unirobust
