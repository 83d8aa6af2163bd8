#include "unirobust/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "unirobust/errors.hpp"
#include "unirobust/parallel.hpp"

namespace unirobust {

std::string_view to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::sgd: return "sgd";
    case BaselineMode::gd: return "gd";
    case BaselineMode::momentum: return "momentum";
    case BaselineMode::clip: return "clip";
    case BaselineMode::normalized: return "normalized";
  }
  return "sgd";
}

BaselineMode parse_baseline_mode(std::string_view name) {
  for (auto m : {BaselineMode::sgd, BaselineMode::gd, BaselineMode::momentum, BaselineMode::clip,
                 BaselineMode::normalized}) {
    if (name == to_string(m)) return m;
  }
  throw ParameterDomainError("unknown optimizer mode '" + std::string(name) + "'");
}

void AAAConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ParameterDomainError("eta must be positive");
  if (T < 1) throw ParameterDomainError("T must be >= 1");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw ParameterDomainError("zeta must lie in (0, 1]");
  if (batch_size < 1) throw ParameterDomainError("batch_size must be >= 1");
  if (param_update_period < 0) throw ParameterDomainError("param_update_period must be >= 0");
  if (c_bracket && !(c_bracket->first > 0.0 && c_bracket->first < c_bracket->second)) {
    throw ParameterDomainError("c_bracket must satisfy 0 < c_min < c_max");
  }
  if (c0 && !(*c0 > 0.0)) throw ParameterDomainError("c0 must be positive");
  if (!(bisection_tol > 0.0)) throw ParameterDomainError("bisection_tol must be positive");
  if (max_iters < 0) throw ParameterDomainError("max_iters must be >= 0");
  if (log_period < 1) throw ParameterDomainError("log_period must be >= 1");
  if (memory == LossMemory::ring_buffer && ring_capacity < 1) {
    throw ParameterDomainError("ring_capacity must be >= 1");
  }
}

namespace {

void validate(const BaselineConfig& cfg) {
  if (!(cfg.eta > 0.0) || !std::isfinite(cfg.eta)) throw ParameterDomainError("eta must be positive");
  if (cfg.batch_size < 1) throw ParameterDomainError("batch_size must be >= 1");
  if (cfg.mode == BaselineMode::clip && !(cfg.clip_tau > 0.0)) {
    throw ParameterDomainError("clip_tau must be positive");
  }
  if (cfg.max_iters < 0) throw ParameterDomainError("max_iters must be >= 0");
  if (cfg.log_period < 1) throw ParameterDomainError("log_period must be >= 1");
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

RobustKernel scaled(const RobustKernel& k, double c) { return k.has_scale() ? k.with_scale(c) : k; }

// Tracks the stopping rule: relative change below eps for `patience` consecutive checks.
class StopTracker {
 public:
  explicit StopTracker(const StopConfig& cfg) : cfg_(cfg) {}

  bool update(double value) {
    if (cfg_.eps <= 0.0) return false;
    if (has_prev_) {
      const double rel = std::abs(value - prev_) / std::max(std::abs(prev_), 1e-300);
      streak_ = rel < cfg_.eps ? streak_ + 1 : 0;
    }
    prev_ = value;
    has_prev_ = true;
    return streak_ >= cfg_.patience;
  }

 private:
  StopConfig cfg_;
  double prev_ = 0.0;
  bool has_prev_ = false;
  int streak_ = 0;
};

LogRow make_row(const ProblemInstance& p, const TrainState& st, std::span<const double> losses,
                const RobustKernel* kernel) {
  LogRow row;
  row.t = st.t;
  row.clean_loss = par::mean_clean_loss(p, st.w);
  row.test_metric = test_metric(p, st.w);
  if (kernel) {
    row.train_robust_loss = par::robust_objective(*kernel, losses);
    row.c = st.c;
    double s = 0.0, mn = 1.0;
    for (double u : st.u) {
      s += u;
      mn = std::min(mn, u);
    }
    row.mean_u = st.u.empty() ? 1.0 : s / static_cast<double>(st.u.size());
    row.min_u = mn;
  } else {
    double s = 0.0;
    for (double f : losses) s += f;
    row.train_robust_loss = losses.empty() ? 0.0 : s / static_cast<double>(losses.size());
  }
  return row;
}

bool row_finite(const LogRow& r) {
  return std::isfinite(r.train_robust_loss) && std::isfinite(r.clean_loss) &&
         std::isfinite(r.test_metric) && std::isfinite(r.c) && std::isfinite(r.mean_u) &&
         std::isfinite(r.min_u);
}

void finalize(RunRecord& rec, const ProblemInstance& p, const TrainState& st) {
  rec.final_w = st.w;
  rec.iterations = st.t;
  rec.final_c = st.c;
  if (!rec.rows.empty()) {
    rec.final_train_loss = rec.rows.back().train_robust_loss;
    rec.final_clean_loss = rec.rows.back().clean_loss;
    rec.final_test_metric = rec.rows.back().test_metric;
  }
  if (all_finite(st.w)) {
    rec.final_test_metric = test_metric(p, st.w);
    rec.final_clean_loss = par::mean_clean_loss(p, st.w);
    rec.final_observed_loss = par::mean_loss(p, st.w);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> coefficient_update(const RobustKernel& kernel, double c,
                                       std::span<const double> losses) {
  return par::coefficient_weights(scaled(kernel, c), losses);
}

std::pair<double, double> default_bracket(std::span<const double> losses) {
  std::vector<double> pos;
  pos.reserve(losses.size());
  double mx = 0.0;
  for (double f : losses) {
    if (f > 0.0) pos.push_back(f);
    mx = std::max(mx, f);
  }
  if (pos.empty()) return {1e-6, 1.0};
  const auto mid = pos.begin() + static_cast<std::ptrdiff_t>(pos.size() / 2);
  std::nth_element(pos.begin(), mid, pos.end());
  double median = *mid;
  if (pos.size() % 2 == 0) {
    const double lower = *std::max_element(pos.begin(), mid);
    median = 0.5 * (median + lower);
  }
  return {1e-6 * median, 1e6 * mx};
}

ParameterUpdateResult parameter_update(const RobustKernel& kernel, std::span<const double> losses,
                                       double zeta, std::optional<std::pair<double, double>> bracket,
                                       double tol) {
  if (losses.empty()) throw DomainError("parameter update needs a nonempty loss set");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw DomainError("zeta must lie in (0, 1]");
  for (double f : losses) {
    if (!(f >= 0.0) || std::isinf(f)) throw DomainError("losses must be finite and nonnegative");
  }
  const auto [c_min, c_max] = bracket ? *bracket : default_bracket(losses);
  ParameterUpdateResult res;

  if (!kernel.has_scale()) {
    res.c = kernel.c();
    res.mean_weight = par::mean_weight(kernel, losses);
    return res;
  }

  const double max_loss = *std::max_element(losses.begin(), losses.end());
  if (max_loss == 0.0) {
    res.c = c_min;
    res.mean_weight = 1.0;
    res.saturated_low = true;
    return res;
  }

  if (kernel.kind() == KernelKind::LinearTruncated) {
    std::vector<double> sorted(losses.begin(), losses.end());
    const double target = zeta * static_cast<double>(sorted.size()) * (1.0 - 1e-12);
    auto kq = static_cast<std::size_t>(std::ceil(target));
    kq = std::clamp<std::size_t>(kq, 1, sorted.size());
    const auto nth = sorted.begin() + static_cast<std::ptrdiff_t>(kq - 1);
    std::nth_element(sorted.begin(), nth, sorted.end());
    res.c = *nth;
    if (res.c <= 0.0) {
      res.c = c_min;
      res.saturated_low = true;
    }
    res.mean_weight = par::mean_weight(kernel.with_scale(res.c), losses);
    return res;
  }

  auto mean_at = [&](double c) { return par::mean_weight(kernel.with_scale(c), losses); };
  const double m_lo = mean_at(c_min);
  const double m_hi = mean_at(c_max);
  if (m_lo > m_hi) {
    throw DomainError("mean weight is not nondecreasing in c on the bracket for " + kernel.id());
  }
  if (m_hi < zeta - tol) {
    res.c = c_max;
    res.mean_weight = m_hi;
    res.saturated_high = true;
    return res;
  }
  if (m_lo > zeta + tol) {
    res.c = c_min;
    res.mean_weight = m_lo;
    res.saturated_low = true;
    return res;
  }
  if (std::abs(m_hi - zeta) <= tol) {
    res.c = c_max;
    res.mean_weight = m_hi;
    return res;
  }
  double a = std::log(c_min), b = std::log(c_max);
  double c = c_min, m = m_lo;
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (a + b);
    c = std::exp(mid);
    m = mean_at(c);
    res.iterations = it + 1;
    if (std::abs(m - zeta) <= tol) break;
    if (m < zeta) a = mid;
    else b = mid;
    if (b - a <= 1e-15 * std::max(1.0, std::abs(a))) break;
  }
  res.c = c;
  res.mean_weight = m;
  return res;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  if (n == 0) throw DomainError("cannot sample from an empty training set");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> b(batch_size);
  for (auto& i : b) i = pick(rng);
  return b;
}

void baseline_step(const ProblemInstance& p, TrainState& state, std::span<const std::size_t> batch,
                   const BaselineConfig& cfg) {
  if (cfg.mode != BaselineMode::gd && batch.empty()) throw DomainError("batch must be nonempty");
  const std::span<const std::size_t> b = cfg.mode == BaselineMode::gd ? std::span<const std::size_t>{} : batch;
  auto g = par::weighted_gradient_mean(p, state.w, b, {});
  if (!all_finite(g)) throw NonFiniteError("non-finite gradient at t = " + std::to_string(state.t));
  switch (cfg.mode) {
    case BaselineMode::momentum: {
      if (state.velocity.size() != g.size()) state.velocity.assign(g.size(), 0.0);
      for (std::size_t j = 0; j < g.size(); ++j) {
        state.velocity[j] = cfg.momentum * state.velocity[j] + g[j];
        g[j] = state.velocity[j];
      }
      break;
    }
    case BaselineMode::clip: {
      const double nrm = norm2(g);
      if (nrm > cfg.clip_tau) {
        for (double& v : g) v *= cfg.clip_tau / nrm;
      }
      break;
    }
    case BaselineMode::normalized: {
      const double nrm = norm2(g);
      if (nrm > 0.0) {
        for (double& v : g) v /= nrm;
      }
      break;
    }
    default:
      break;
  }
  std::vector<double> w_new(state.w);
  for (std::size_t j = 0; j < g.size(); ++j) w_new[j] -= cfg.eta * g[j];
  if (!all_finite(w_new)) throw NonFiniteError("non-finite iterate at t = " + std::to_string(state.t));
  state.w = std::move(w_new);
  ++state.t;
}

void aaa_step(const ProblemInstance& p, TrainState& state, std::span<const std::size_t> batch,
              const AAAConfig& cfg) {
  if (batch.empty()) throw DomainError("batch must be nonempty");
  if (state.u.size() != p.n()) throw ShapeError("coefficient vector must have length n");
  const auto g = par::weighted_gradient_mean(p, state.w, batch, state.u);
  if (!all_finite(g)) throw NonFiniteError("non-finite gradient at t = " + std::to_string(state.t));
  std::vector<double> w_new(state.w);
  for (std::size_t j = 0; j < g.size(); ++j) w_new[j] -= cfg.eta * g[j];
  if (!all_finite(w_new)) throw NonFiniteError("non-finite iterate at t = " + std::to_string(state.t));
  state.w = std::move(w_new);
  ++state.t;
}

// ---------------------------------------------------------------------------

RunRecord run_baseline(const ProblemInstance& p, const BaselineConfig& cfg, std::uint64_t seed,
                       const RunObserver& observer) {
  validate(cfg);
  RunRecord rec;
  rec.method = std::string(to_string(cfg.mode));
  std::mt19937_64 rng(seed);
  TrainState st;
  st.w.assign(p.dim(), 0.0);
  StopTracker stop(cfg.stop);

  auto log_now = [&]() -> bool {
    const auto f = par::losses(p, st.w);
    LogRow row = make_row(p, st, f, nullptr);
    if (!row_finite(row)) {
      rec.aborted = true;
      rec.abort_reason = "non-finite metrics at t = " + std::to_string(st.t);
      return false;
    }
    rec.rows.push_back(row);
    if (observer) observer(RunEvent::log, st, f);
    return true;
  };

  if (observer) observer(RunEvent::start, st, {});
  bool ok = log_now();
  if (ok) stop.update(rec.rows.back().train_robust_loss);
  std::vector<std::size_t> batch;
  while (ok && st.t < cfg.max_iters) {
    if (cfg.mode != BaselineMode::gd) batch = sample_batch(p.n(), cfg.batch_size, rng);
    try {
      baseline_step(p, st, batch, cfg);
    } catch (const NonFiniteError& e) {
      rec.aborted = true;
      rec.abort_reason = e.what();
      break;
    }
    if (st.t % cfg.log_period == 0 || st.t == cfg.max_iters) {
      if (!log_now()) break;
      if (stop.update(rec.rows.back().train_robust_loss)) {
        rec.stopped_early = st.t < cfg.max_iters;
        break;
      }
    }
  }
  if (!rec.aborted && (rec.rows.empty() || rec.rows.back().t != st.t)) log_now();
  finalize(rec, p, st);
  if (observer) observer(RunEvent::finish, st, {});
  return rec;
}

RunRecord run_aaa(const ProblemInstance& p, const AAAConfig& cfg, std::uint64_t seed,
                  const RunObserver& observer) {
  cfg.validate();
  if (!cfg.kernel.supports_duality() && cfg.kernel.kind() != KernelKind::LinearTruncated) {
    throw UnsupportedOperation(cfg.kernel.id() + " cannot be used with the alternation algorithm");
  }
  RunRecord rec;
  rec.method = "aaa:" + cfg.kernel.id();
  std::mt19937_64 rng(seed);
  const std::int64_t period = cfg.param_update_period > 0 ? cfg.param_update_period : cfg.T;

  TrainState st;
  st.w.assign(p.dim(), 0.0);
  auto losses = par::losses(p, st.w);
  const double max_loss = losses.empty() ? 0.0 : *std::max_element(losses.begin(), losses.end());
  st.c = cfg.c0 ? *cfg.c0 : (max_loss > 0.0 ? max_loss : 1.0);
  if (!cfg.kernel.has_scale()) st.c = cfg.kernel.c();
  RobustKernel kernel = scaled(cfg.kernel, st.c);
  st.u = par::coefficient_weights(kernel, losses);
  st.s = 0;

  std::vector<double> ring;
  std::size_t ring_next = 0;
  if (cfg.memory == LossMemory::ring_buffer) ring.reserve(cfg.ring_capacity);

  StopTracker stop(cfg.stop);
  auto log_now = [&](std::span<const double> f) -> bool {
    LogRow row = make_row(p, st, f, &kernel);
    if (!row_finite(row)) {
      rec.aborted = true;
      rec.abort_reason = "non-finite metrics at t = " + std::to_string(st.t);
      return false;
    }
    rec.rows.push_back(row);
    if (observer) observer(RunEvent::log, st, f);
    return true;
  };

  if (observer) observer(RunEvent::start, st, losses);
  bool ok = log_now(losses);
  if (ok) stop.update(par::robust_objective(kernel, losses));
  bool losses_current = true;

  while (ok && st.t < cfg.max_iters) {
    const auto batch = sample_batch(p.n(), cfg.batch_size, rng);
    if (cfg.memory == LossMemory::ring_buffer) {
      for (std::size_t i : batch) {
        const double f = sample_loss(p, st.w, i);
        if (ring.size() < cfg.ring_capacity) ring.push_back(f);
        else ring[ring_next] = f;
        ring_next = (ring_next + 1) % cfg.ring_capacity;
      }
    }
    try {
      aaa_step(p, st, batch, cfg);
    } catch (const NonFiniteError& e) {
      rec.aborted = true;
      rec.abort_reason = e.what();
      break;
    }
    losses_current = false;

    const bool need_param = st.t % period == 0;
    const bool need_coef = st.t % cfg.T == 0;
    if ((need_param || need_coef) && st.t < cfg.max_iters) {
      losses = par::losses(p, st.w);
      losses_current = true;
      if (!all_finite(losses)) {
        rec.aborted = true;
        rec.abort_reason = "non-finite losses at t = " + std::to_string(st.t);
        break;
      }
      if (need_param && cfg.kernel.has_scale()) {
        const bool use_ring = cfg.memory == LossMemory::ring_buffer && !ring.empty();
        const std::span<const double> D = use_ring ? std::span<const double>(ring) : std::span<const double>(losses);
        const auto res = parameter_update(kernel, D, cfg.zeta, cfg.c_bracket, cfg.bisection_tol);
        st.c = res.c;
        kernel = kernel.with_scale(st.c);
        rec.saturation_high += res.saturated_high ? 1 : 0;
        rec.saturation_low += res.saturated_low ? 1 : 0;
        ++rec.parameter_updates;
      }
      if (need_coef) {
        st.u = par::coefficient_weights(kernel, losses);
        st.s = st.t;
        if (observer) observer(RunEvent::refresh, st, losses);
        if (stop.update(par::robust_objective(kernel, losses))) {
          rec.stopped_early = true;
          ok = log_now(losses);
          break;
        }
      }
    }
    if (st.t % cfg.log_period == 0 || st.t == cfg.max_iters) {
      if (!losses_current) {
        losses = par::losses(p, st.w);
        losses_current = true;
      }
      if (!log_now(losses)) break;
    }
  }
  if (!rec.aborted && (rec.rows.empty() || rec.rows.back().t != st.t)) {
    if (!losses_current) losses = par::losses(p, st.w);
    log_now(losses);
  }
  finalize(rec, p, st);
  if (observer) observer(RunEvent::finish, st, losses_current ? std::span<const double>(losses) : std::span<const double>{});
  return rec;
}

// ---------------------------------------------------------------------------

void write_run_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kRunCsvHeader << '\n';
  for (const auto& r : rec.rows) {
    out << r.t << ',' << format_double(r.train_robust_loss) << ',' << format_double(r.clean_loss) << ','
        << format_double(r.test_metric) << ',' << format_double(r.c) << ',' << format_double(r.mean_u)
        << ',' << format_double(r.min_u) << '\n';
  }
}

nlohmann::json run_summary_json(const RunRecord& rec) {
  return {{"method", rec.method},
          {"iterations", rec.iterations},
          {"stopped_early", rec.stopped_early},
          {"aborted", rec.aborted},
          {"abort_reason", rec.abort_reason},
          {"saturation_high", rec.saturation_high},
          {"saturation_low", rec.saturation_low},
          {"parameter_updates", rec.parameter_updates},
          {"final_test_metric", rec.final_test_metric},
          {"final_train_loss", rec.final_train_loss},
          {"final_clean_loss", rec.final_clean_loss},
          {"final_observed_loss", rec.final_observed_loss},
          {"final_c", rec.final_c},
          {"final_w", rec.final_w}};
}

}  // namespace unirobust
