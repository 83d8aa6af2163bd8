#include "unirobust/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <omp.h>
#include <yaml-cpp/yaml.h>

#include "unirobust/diagnostics.hpp"
#include "unirobust/errors.hpp"
#include "unirobust/parallel.hpp"

namespace unirobust {

ConfigError::ConfigError(const std::string& file, int line, const std::string& msg)
    : std::runtime_error(line > 0 ? fmt::format("{}:{}: {}", file, line, msg) : fmt::format("{}: {}", file, msg)),
      line_(line) {}

// ---------------------------------------------------------------------------
// Seeds

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t trial, std::uint64_t sweep_point) {
  return splitmix64(base_seed ^ splitmix64((trial << 32) | (sweep_point & 0xFFFFFFFFull)));
}

std::uint64_t derive_run_seed(std::uint64_t instance_seed) { return splitmix64(instance_seed + 1); }

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Reader {
 public:
  explicit Reader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    const int line = node.IsDefined() ? node.Mark().line + 1 : 0;
    throw ConfigError(file_, line, msg);
  }

  template <class T>
  T get(const YAML::Node& node, const std::string& what) const {
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, fmt::format("'{}' has an invalid value", what));
    }
  }

  template <class T>
  void opt(const YAML::Node& parent, const char* key, T& out, const std::string& path) const {
    const auto n = parent[key];
    if (n) out = get<T>(n, path + "." + key);
  }

  void keys(const YAML::Node& node, std::initializer_list<const char*> allowed, const std::string& path) const {
    if (!node.IsMap()) fail(node, fmt::format("'{}' must be a mapping", path));
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, fmt::format("unknown key '{}' in '{}'", key, path));
    }
  }

  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

RobustKernel read_kernel(const Reader& rd, const YAML::Node& node, const std::string& path) {
  try {
    if (node.IsScalar()) return parse_kernel_spec(node.as<std::string>());
    rd.keys(node, {"kind", "c", "alpha", "q", "A", "t", "a", "p", "normalize"}, path);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (key == "kind") j[key] = kv.second.as<std::string>();
      else if (key == "normalize") j[key] = kv.second.as<bool>();
      else if (key == "t" || key == "p") j[key] = kv.second.as<int>();
      else j[key] = kv.second.as<double>();
    }
    return kernel_from_json(j);
  } catch (const YAML::Exception&) {
    rd.fail(node, fmt::format("'{}' has an invalid value", path));
  } catch (const std::invalid_argument& e) {
    rd.fail(node, fmt::format("'{}': {}", path, e.what()));
  }
}

void check_positive(const Reader& rd, const YAML::Node& node, double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) rd.fail(node, fmt::format("'{}' must be positive", what));
}

ProblemSpec read_problem(const Reader& rd, const YAML::Node& node) {
  rd.keys(node, {"kind", "n", "k", "K", "lambda", "noise_sd", "outlier_sd", "separation", "test_fraction"},
          "problem");
  ProblemSpec ps;
  if (!node["kind"]) rd.fail(node, "'problem.kind' is required");
  try {
    ps.kind = parse_problem_kind(node["kind"].as<std::string>());
  } catch (const std::exception&) {
    rd.fail(node["kind"], "'problem.kind' must be 'regression' or 'classification'");
  }
  if (ps.kind == ProblemKind::SoftmaxClassificationCE) {
    ps.n = 600;
    ps.k = 5;
  }
  rd.opt(node, "n", ps.n, "problem");
  rd.opt(node, "k", ps.k, "problem");
  rd.opt(node, "K", ps.K, "problem");
  rd.opt(node, "noise_sd", ps.noise_sd, "problem");
  rd.opt(node, "outlier_sd", ps.outlier_sd, "problem");
  rd.opt(node, "separation", ps.separation, "problem");
  rd.opt(node, "test_fraction", ps.test_fraction, "problem");
  if (const auto l = node["lambda"]) {
    if (l.IsSequence()) ps.lambdas = rd.get<std::vector<double>>(l, "problem.lambda");
    else ps.lambdas = {rd.get<double>(l, "problem.lambda")};
    if (ps.lambdas.empty()) rd.fail(l, "'problem.lambda' must not be empty");
    for (double v : ps.lambdas) {
      if (!(v >= 0.0 && v < 1.0)) rd.fail(l, "'problem.lambda' values must lie in [0, 1)");
    }
  }
  if (ps.n < 1) rd.fail(node, "'problem.n' must be >= 1");
  if (ps.k < 1) rd.fail(node, "'problem.k' must be >= 1");
  if (ps.kind == ProblemKind::SoftmaxClassificationCE) {
    if (ps.K < 2) rd.fail(node, "'problem.K' must be >= 2");
    if (ps.k < ps.K) rd.fail(node, "'problem.k' must be >= 'problem.K' for the blob generator");
  }
  if (node["test_fraction"]) check_positive(rd, node["test_fraction"], ps.test_fraction, "problem.test_fraction");
  return ps;
}

MethodSpec read_method(const Reader& rd, const YAML::Node& node, std::size_t index) {
  const std::string path = fmt::format("methods[{}]", index);
  rd.keys(node,
          {"name", "mode", "kernel", "eta", "batch_size", "T", "zeta", "max_iters", "stop", "momentum",
           "clip_tau", "param_update_period", "c0", "c_bracket", "bisection_tol", "memory", "ring_capacity"},
          path);
  MethodSpec m;
  if (!node["name"]) rd.fail(node, fmt::format("'{}.name' is required", path));
  if (!node["mode"]) rd.fail(node, fmt::format("'{}.mode' is required", path));
  m.name = rd.get<std::string>(node["name"], path + ".name");
  m.mode = rd.get<std::string>(node["mode"], path + ".mode");
  if (m.name.empty() || m.name.find_first_of("/\\, \t") != std::string::npos) {
    rd.fail(node["name"], fmt::format("'{}.name' must be nonempty without separators or spaces", path));
  }
  if (m.mode != "aaa") {
    try {
      parse_baseline_mode(m.mode);
    } catch (const std::exception&) {
      rd.fail(node["mode"], fmt::format("'{}.mode' must be one of aaa, sgd, gd, momentum, clip, normalized", path));
    }
  }
  if (const auto k = node["kernel"]) {
    if (m.mode != "aaa") rd.fail(k, fmt::format("'{}.kernel' is only valid for mode aaa", path));
    m.kernel = read_kernel(rd, k, path + ".kernel");
    if (!m.kernel->supports_duality()) {
      rd.fail(k, fmt::format("'{}.kernel' {} fails the kernel conditions needed by the alternation algorithm",
                             path, m.kernel->id()));
    }
  } else if (m.mode == "aaa") {
    rd.fail(node, fmt::format("'{}.kernel' is required for mode aaa", path));
  }
  rd.opt(node, "eta", m.eta, path);
  rd.opt(node, "batch_size", m.batch_size, path);
  rd.opt(node, "T", m.T, path);
  rd.opt(node, "zeta", m.zeta, path);
  rd.opt(node, "max_iters", m.max_iters, path);
  rd.opt(node, "momentum", m.momentum, path);
  rd.opt(node, "clip_tau", m.clip_tau, path);
  rd.opt(node, "param_update_period", m.param_update_period, path);
  rd.opt(node, "bisection_tol", m.bisection_tol, path);
  rd.opt(node, "ring_capacity", m.ring_capacity, path);
  if (const auto s = node["stop"]) {
    rd.keys(s, {"eps", "patience"}, path + ".stop");
    rd.opt(s, "eps", m.stop.eps, path + ".stop");
    rd.opt(s, "patience", m.stop.patience, path + ".stop");
    if (m.stop.eps < 0.0) rd.fail(s, fmt::format("'{}.stop.eps' must be >= 0", path));
    if (m.stop.patience < 1) rd.fail(s, fmt::format("'{}.stop.patience' must be >= 1", path));
  }
  if (const auto c0 = node["c0"]) {
    m.c0 = rd.get<double>(c0, path + ".c0");
    check_positive(rd, c0, *m.c0, path + ".c0");
  }
  if (const auto b = node["c_bracket"]) {
    const auto v = rd.get<std::vector<double>>(b, path + ".c_bracket");
    if (v.size() != 2 || !(v[0] > 0.0 && v[0] < v[1])) {
      rd.fail(b, fmt::format("'{}.c_bracket' must be [c_min, c_max] with 0 < c_min < c_max", path));
    }
    m.c_bracket = std::pair{v[0], v[1]};
  }
  if (const auto mem = node["memory"]) {
    const auto v = rd.get<std::string>(mem, path + ".memory");
    if (v == "full_pass") m.memory = LossMemory::full_pass;
    else if (v == "ring_buffer") m.memory = LossMemory::ring_buffer;
    else rd.fail(mem, fmt::format("'{}.memory' must be full_pass or ring_buffer", path));
  }
  if (node["eta"]) check_positive(rd, node["eta"], m.eta, path + ".eta");
  if (m.batch_size < 1) rd.fail(node["batch_size"], fmt::format("'{}.batch_size' must be >= 1", path));
  if (m.T < 1) rd.fail(node["T"], fmt::format("'{}.T' must be >= 1", path));
  if (!(m.zeta > 0.0 && m.zeta <= 1.0)) rd.fail(node["zeta"], fmt::format("'{}.zeta' must lie in (0, 1]", path));
  if (m.max_iters < 0) rd.fail(node["max_iters"], fmt::format("'{}.max_iters' must be >= 0", path));
  if (m.param_update_period < 0) {
    rd.fail(node["param_update_period"], fmt::format("'{}.param_update_period' must be >= 0", path));
  }
  if (node["clip_tau"]) check_positive(rd, node["clip_tau"], m.clip_tau, path + ".clip_tau");
  if (node["bisection_tol"]) check_positive(rd, node["bisection_tol"], m.bisection_tol, path + ".bisection_tol");
  if (m.ring_capacity < 1) rd.fail(node["ring_capacity"], fmt::format("'{}.ring_capacity' must be >= 1", path));
  return m;
}

ExperimentConfig read_root(const Reader& rd, const YAML::Node& root) {
  if (!root.IsMap()) rd.fail(root, "config root must be a mapping");
  rd.keys(root, {"problem", "methods", "trials", "base_seed", "outputs", "diagnostics"}, "config");
  ExperimentConfig cfg;
  cfg.source = rd.file();
  if (!root["problem"]) rd.fail(root, "'problem' section is required");
  cfg.problem = read_problem(rd, root["problem"]);
  const auto methods = root["methods"];
  if (!methods || !methods.IsSequence() || methods.size() == 0) {
    rd.fail(methods ? methods : root, "'methods' must be a nonempty list");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    auto m = read_method(rd, methods[i], i);
    if (!names.insert(m.name).second) rd.fail(methods[i]["name"], fmt::format("duplicate method name '{}'", m.name));
    cfg.methods.push_back(std::move(m));
  }
  rd.opt(root, "trials", cfg.trials, "config");
  if (cfg.trials < 1) rd.fail(root["trials"], "'trials' must be >= 1");
  rd.opt(root, "base_seed", cfg.base_seed, "config");
  if (const auto out = root["outputs"]) {
    rd.keys(out, {"directory", "log_period", "workers", "write_runs"}, "outputs");
    if (out["directory"]) cfg.output_dir = rd.get<std::string>(out["directory"], "outputs.directory");
    rd.opt(out, "log_period", cfg.log_period, "outputs");
    rd.opt(out, "workers", cfg.workers, "outputs");
    rd.opt(out, "write_runs", cfg.write_runs, "outputs");
    if (cfg.log_period < 1) rd.fail(out["log_period"], "'outputs.log_period' must be >= 1");
    if (cfg.workers < 0) rd.fail(out["workers"], "'outputs.workers' must be >= 0");
  }
  if (const auto d = root["diagnostics"]) {
    rd.keys(d, {"enabled", "baseline_kernel", "baseline_zeta", "trajectory"}, "diagnostics");
    rd.opt(d, "enabled", cfg.diagnostics.enabled, "diagnostics");
    rd.opt(d, "trajectory", cfg.diagnostics.trajectory, "diagnostics");
    rd.opt(d, "baseline_zeta", cfg.diagnostics.baseline_zeta, "diagnostics");
    if (!(cfg.diagnostics.baseline_zeta > 0.0 && cfg.diagnostics.baseline_zeta <= 1.0)) {
      rd.fail(d["baseline_zeta"], "'diagnostics.baseline_zeta' must lie in (0, 1]");
    }
    if (const auto k = d["baseline_kernel"]) {
      cfg.diagnostics.baseline_kernel = read_kernel(rd, k, "diagnostics.baseline_kernel");
    }
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
  const Reader rd(source_name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source_name, e.mark.line + 1, e.msg);
  }
  return read_root(rd, root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_environment_overrides(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("UNIROBUST_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  if (const char* w = std::getenv("UNIROBUST_WORKERS"); w && *w) {
    char* end = nullptr;
    const long v = std::strtol(w, &end, 10);
    if (*end != '\0' || v < 0) throw ConfigError("UNIROBUST_WORKERS", 0, "must be a nonnegative integer");
    cfg.workers = static_cast<int>(v);
  }
}

// ---------------------------------------------------------------------------
// Canonical form

namespace {

nlohmann::json method_json(const MethodSpec& m) {
  nlohmann::json j = {{"name", m.name},
                      {"mode", m.mode},
                      {"eta", m.eta},
                      {"batch_size", m.batch_size},
                      {"max_iters", m.max_iters},
                      {"stop", {{"eps", m.stop.eps}, {"patience", m.stop.patience}}}};
  if (m.mode == "momentum") j["momentum"] = m.momentum;
  if (m.mode == "clip") j["clip_tau"] = m.clip_tau;
  if (m.is_aaa()) {
    j["kernel"] = kernel_to_json(*m.kernel);
    j["T"] = m.T;
    j["zeta"] = m.zeta;
    j["param_update_period"] = m.param_update_period;
    j["c0"] = m.c0 ? nlohmann::json(*m.c0) : nlohmann::json(nullptr);
    j["c_bracket"] = m.c_bracket ? nlohmann::json({m.c_bracket->first, m.c_bracket->second}) : nlohmann::json(nullptr);
    j["bisection_tol"] = m.bisection_tol;
    j["memory"] = m.memory == LossMemory::full_pass ? "full_pass" : "ring_buffer";
    if (m.memory == LossMemory::ring_buffer) j["ring_capacity"] = m.ring_capacity;
  }
  return j;
}

nlohmann::json problem_json(const ProblemSpec& p) {
  nlohmann::json j = {{"kind", std::string(to_string(p.kind))},
                      {"n", p.n},
                      {"k", p.k},
                      {"lambda", p.lambdas},
                      {"test_fraction", p.test_fraction}};
  if (p.kind == ProblemKind::LinearRegressionMSE) {
    j["noise_sd"] = p.noise_sd;
    j["outlier_sd"] = p.outlier_sd;
  } else {
    j["K"] = p.K;
    j["separation"] = p.separation;
  }
  return j;
}

}  // namespace

nlohmann::json ExperimentConfig::canonical() const {
  nlohmann::json methods_json = nlohmann::json::array();
  for (const auto& m : methods) methods_json.push_back(method_json(m));
  return {{"problem", problem_json(problem)},
          {"methods", methods_json},
          {"trials", trials},
          {"base_seed", base_seed},
          {"log_period", log_period},
          {"diagnostics",
           {{"enabled", diagnostics.enabled},
            {"trajectory", diagnostics.trajectory},
            {"baseline_kernel", kernel_to_json(diagnostics.baseline_kernel)},
            {"baseline_zeta", diagnostics.baseline_zeta}}}};
}

std::string ExperimentConfig::hash() const {
  const std::string s = canonical().dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------------------
// Instances

ProblemInstance make_instance(const ProblemSpec& spec, double lambda, std::uint64_t seed) {
  if (spec.kind == ProblemKind::LinearRegressionMSE) {
    RegressionConfig rc;
    rc.n = spec.n;
    rc.k = spec.k;
    rc.lambda = lambda;
    rc.noise_sd = spec.noise_sd;
    rc.outlier_sd = spec.outlier_sd;
    rc.test_fraction = spec.test_fraction;
    rc.seed = seed;
    return gen_linear_regression(rc);
  }
  ClassificationConfig cc;
  cc.n = spec.n;
  cc.k = spec.k;
  cc.K = spec.K;
  cc.lambda = lambda;
  cc.separation = spec.separation;
  cc.test_fraction = spec.test_fraction;
  cc.seed = seed;
  return gen_blob_classification(cc);
}

namespace {

nlohmann::json instance_spec_json(const ProblemSpec& spec, double lambda, std::uint64_t seed) {
  nlohmann::json j = problem_json(spec);
  j["lambda"] = lambda;
  j["seed"] = seed;
  return j;
}

}  // namespace

ProblemInstance instance_from_json(const nlohmann::json& j) {
  ProblemSpec spec;
  spec.kind = parse_problem_kind(j.at("kind").get<std::string>());
  spec.n = j.at("n").get<std::size_t>();
  spec.k = j.at("k").get<std::size_t>();
  spec.K = j.value("K", spec.K);
  spec.noise_sd = j.value("noise_sd", spec.noise_sd);
  spec.outlier_sd = j.value("outlier_sd", spec.outlier_sd);
  spec.separation = j.value("separation", spec.separation);
  spec.test_fraction = j.value("test_fraction", spec.test_fraction);
  return make_instance(spec, j.at("lambda").get<double>(), j.at("seed").get<std::uint64_t>());
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Task {
  std::size_t sweep_point;
  std::size_t trial;
  std::size_t method;
};

RobustKernel scaled_kernel(const RobustKernel& k, double c) { return k.has_scale() ? k.with_scale(c) : k; }

// Kernel and c used for the diagnostics of a run at the given losses.
std::pair<RobustKernel, double> diagnostic_kernel(const ExperimentConfig& cfg, const MethodSpec& m,
                                                  double c, std::span<const double> losses) {
  if (m.is_aaa()) return {*m.kernel, c};
  const auto& k = cfg.diagnostics.baseline_kernel;
  if (!k.has_scale()) return {k, k.c()};
  const auto res = parameter_update(k, losses, cfg.diagnostics.baseline_zeta);
  return {k, res.c};
}

nlohmann::json trajectory_point(const ProblemInstance& p, const ExperimentConfig& cfg, const MethodSpec& m,
                                const TrainState& st, std::span<const double> losses,
                                const std::vector<double>& w_s, double c_s) {
  const auto [k, c] = diagnostic_kernel(cfg, m, st.c, losses);
  nlohmann::json j = to_json(region_report(p, st.w, k, c));
  j["t"] = st.t;
  j["c"] = c;
  if (m.is_aaa() && !w_s.empty()) j["M_aaa_stale"] = stale_region_statistic(p, st.w, w_s, k, c_s);
  return j;
}

RunResult execute(const ExperimentConfig& cfg, const Task& task) {
  RunResult rr;
  rr.sweep_point = task.sweep_point;
  rr.trial = task.trial;
  rr.method = task.method;
  rr.lambda = cfg.problem.lambdas[task.sweep_point];
  rr.instance_seed = derive_seed(cfg.base_seed, task.trial, task.sweep_point);
  const MethodSpec& m = cfg.methods[task.method];
  const std::uint64_t run_seed = derive_run_seed(rr.instance_seed);
  try {
    const ProblemInstance p = make_instance(cfg.problem, rr.lambda, rr.instance_seed);
    nlohmann::json trajectory = nlohmann::json::array();
    std::vector<double> w_s;
    double c_s = 0.0;
    RunObserver observer;
    if (cfg.diagnostics.enabled && cfg.diagnostics.trajectory) {
      observer = [&](RunEvent ev, const TrainState& st, std::span<const double> losses) {
        if (ev == RunEvent::start || ev == RunEvent::refresh) {
          w_s = st.w;
          c_s = st.c;
        }
        if (ev == RunEvent::log) trajectory.push_back(trajectory_point(p, cfg, m, st, losses, w_s, c_s));
      };
    }
    if (m.is_aaa()) {
      AAAConfig a;
      a.kernel = *m.kernel;
      a.eta = m.eta;
      a.batch_size = m.batch_size;
      a.T = m.T;
      a.zeta = m.zeta;
      a.c0 = m.c0;
      a.param_update_period = m.param_update_period;
      a.c_bracket = m.c_bracket;
      a.bisection_tol = m.bisection_tol;
      a.max_iters = m.max_iters;
      a.log_period = cfg.log_period;
      a.stop = m.stop;
      a.memory = m.memory;
      a.ring_capacity = m.ring_capacity;
      rr.record = run_aaa(p, a, run_seed, observer);
    } else {
      BaselineConfig b;
      b.mode = parse_baseline_mode(m.mode);
      b.eta = m.eta;
      b.batch_size = m.batch_size;
      b.momentum = m.momentum;
      b.clip_tau = m.clip_tau;
      b.max_iters = m.max_iters;
      b.log_period = cfg.log_period;
      b.stop = m.stop;
      rr.record = run_baseline(p, b, run_seed, observer);
    }
    rr.record.method = m.name;
    if (rr.record.aborted) {
      rr.failed = true;
      rr.failure = rr.record.abort_reason;
    }

    if (cfg.diagnostics.enabled) {
      nlohmann::json d = {{"lambda", rr.lambda},
                          {"method", m.name},
                          {"trial", rr.trial},
                          {"instance_seed", rr.instance_seed},
                          {"failed", rr.failed}};
      const auto& w = rr.record.final_w;
      if (std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); })) {
        const auto losses = par::losses(p, w);
        const auto [k, c] = diagnostic_kernel(cfg, m, rr.record.final_c, losses);
        const auto region = region_report(p, w, k, c);
        d["kernel"] = kernel_to_json(scaled_kernel(k, c));
        d["variance"] = to_json(variance_report(p, w, k, c, m.eta));
        d["region"] = to_json(region);
        if (p.kind == ProblemKind::LinearRegressionMSE) {
          d["step_size"] = to_json(step_size_thresholds(p, 1e-2, region.M_sgd, region.M_aaa, region.min_weight,
                                                        m.is_aaa() ? m.zeta : cfg.diagnostics.baseline_zeta));
        }
      }
      d["trajectory"] = std::move(trajectory);
      rr.diagnostics = std::move(d);
    }

    if (cfg.write_runs) {
      const auto dir = cfg.output_dir / "runs";
      const std::string stem = fmt::format("l{:02}_{}_t{}", rr.sweep_point, m.name, rr.trial);
      write_run_csv(rr.record, (dir / (stem + ".csv")).string());
      nlohmann::json j = {{"config_hash", cfg.hash()},
                          {"base_seed", cfg.base_seed},
                          {"method", m.name},
                          {"mode", m.mode},
                          {"lambda", rr.lambda},
                          {"trial", rr.trial},
                          {"instance_seed", rr.instance_seed},
                          {"run_seed", run_seed},
                          {"problem", instance_spec_json(cfg.problem, rr.lambda, rr.instance_seed)},
                          {"failed", rr.failed},
                          {"record", run_summary_json(rr.record)}};
      std::ofstream out(dir / (stem + ".json"), std::ios::binary);
      out << j.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    rr.failed = true;
    rr.failure = e.what();
  }
  return rr;
}

std::string fmt_csv(double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); }

}  // namespace

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  std::vector<SummaryRow> rows;
  const std::string metric = cfg.problem.kind == ProblemKind::LinearRegressionMSE ? "rmse" : "accuracy";
  for (std::size_t m = 0; m < cfg.problem.lambdas.size(); ++m) {
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
      SummaryRow row;
      row.lambda = cfg.problem.lambdas[m];
      row.method = cfg.methods[i].name;
      row.metric = metric;
      std::vector<const RunResult*> ok;
      for (const auto& r : runs) {
        if (r.sweep_point != m || r.method != i) continue;
        ++row.trials;
        if (r.failed) ++row.failures;
        else ok.push_back(&r);
      }
      if (ok.empty()) {
        row.mean = row.std = row.min = row.max = row.mean_clean_loss = row.mean_final_c =
            std::numeric_limits<double>::quiet_NaN();
      } else {
        const double cnt = static_cast<double>(ok.size());
        row.min = std::numeric_limits<double>::infinity();
        row.max = -std::numeric_limits<double>::infinity();
        for (const auto* r : ok) {
          const double v = r->record.final_test_metric;
          row.mean += v;
          row.min = std::min(row.min, v);
          row.max = std::max(row.max, v);
          row.mean_clean_loss += r->record.final_clean_loss;
          row.mean_final_c += r->record.final_c;
        }
        row.mean /= cnt;
        row.mean_clean_loss /= cnt;
        row.mean_final_c /= cnt;
        if (ok.size() >= 2) {
          double ss = 0.0;
          for (const auto* r : ok) {
            const double d = r->record.final_test_metric - row.mean;
            ss += d * d;
          }
          row.std = std::sqrt(ss / (cnt - 1.0));
        }
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_summary_csv(const ExperimentConfig& cfg, const std::vector<SummaryRow>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# config_hash=" << cfg.hash() << " base_seed=" << cfg.base_seed << '\n';
  out << kSummaryCsvHeader << '\n';
  for (const auto& r : rows) {
    out << format_double(r.lambda) << ',' << r.method << ',' << r.metric << ',' << r.trials << ','
        << r.failures << ',' << fmt_csv(r.mean) << ',' << fmt_csv(r.std) << ',' << fmt_csv(r.min) << ','
        << fmt_csv(r.max) << ',' << fmt_csv(r.mean_clean_loss) << ',' << fmt_csv(r.mean_final_c) << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  std::filesystem::create_directories(cfg.output_dir);
  if (cfg.write_runs) std::filesystem::create_directories(cfg.output_dir / "runs");

  result.kernel_reports = nlohmann::json::array();
  for (const auto& m : cfg.methods) {
    if (m.kernel) {
      auto j = to_json(conformance_check(*m.kernel));
      j["method"] = m.name;
      result.kernel_reports.push_back(std::move(j));
    }
  }

  std::vector<Task> tasks;
  for (std::size_t m = 0; m < cfg.problem.lambdas.size(); ++m) {
    for (std::size_t j = 0; j < cfg.trials; ++j) {
      for (std::size_t i = 0; i < cfg.methods.size(); ++i) tasks.push_back({m, j, i});
    }
  }
  result.runs.resize(tasks.size());
  const int workers = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::size_t t = 0; t < tasks.size(); ++t) result.runs[t] = execute(cfg, tasks[t]);

  result.summary = summarize(cfg, result.runs);
  write_summary_csv(cfg, result.summary, cfg.output_dir / "summary.csv");

  nlohmann::json diag = {{"config_hash", cfg.hash()},
                         {"base_seed", cfg.base_seed},
                         {"kernels", result.kernel_reports},
                         {"runs", nlohmann::json::array()}};
  for (const auto& r : result.runs) {
    nlohmann::json d = r.diagnostics.is_null() ? nlohmann::json::object() : r.diagnostics;
    d["lambda"] = r.lambda;
    d["method"] = cfg.methods[r.method].name;
    d["trial"] = r.trial;
    d["failed"] = r.failed;
    if (r.failed) d["failure"] = r.failure;
    diag["runs"].push_back(std::move(d));
  }
  std::ofstream out(cfg.output_dir / "diagnostics.json", std::ios::binary);
  out << diag.dump(1) << '\n';
  return result;
}

}  // namespace unirobust
