#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "unirobust/kernels.hpp"
#include "unirobust/parallel.hpp"
#include "unirobust/problems.hpp"
#include "unirobust/serial.hpp"

namespace ur = unirobust;

namespace {

const ur::ProblemInstance& instance(std::size_t n) {
  static std::vector<std::pair<std::size_t, ur::ProblemInstance>> cache;
  for (const auto& [m, p] : cache) {
    if (m == n) return p;
  }
  cache.emplace_back(n, ur::gen_linear_regression({.n = n, .k = 10, .lambda = 0.3, .seed = 1}));
  return cache.back().second;
}

std::vector<double> weights(std::size_t d) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<double> w(d);
  for (auto& v : w) v = nd(rng);
  return w;
}

template <class Fn>
void losses_pass(benchmark::State& state, Fn fn) {
  const auto& p = instance(static_cast<std::size_t>(state.range(0)));
  const auto w = weights(p.dim());
  for (auto _ : state) benchmark::DoNotOptimize(fn(p, w));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <class Fn>
void gradient_pass(benchmark::State& state, Fn fn) {
  const auto& p = instance(static_cast<std::size_t>(state.range(0)));
  const auto w = weights(p.dim());
  const auto u = ur::par::coefficient_weights(ur::RobustKernel(ur::KernelKind::GemanMcClure, 5.0),
                                              ur::par::losses(p, w));
  for (auto _ : state) benchmark::DoNotOptimize(fn(p, w, std::span<const std::size_t>{}, u));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_losses_serial(benchmark::State& s) {
  losses_pass(s, [](const auto& p, const auto& w) { return ur::serial::losses(p, w); });
}
void BM_losses_parallel(benchmark::State& s) {
  losses_pass(s, [](const auto& p, const auto& w) { return ur::par::losses(p, w); });
}
void BM_gradient_serial(benchmark::State& s) {
  gradient_pass(s, [](const auto& p, const auto& w, auto b, const auto& u) {
    return ur::serial::weighted_gradient_mean(p, w, b, u);
  });
}
void BM_gradient_parallel(benchmark::State& s) {
  gradient_pass(s, [](const auto& p, const auto& w, auto b, const auto& u) {
    return ur::par::weighted_gradient_mean(p, w, b, u);
  });
}
void BM_weights_serial(benchmark::State& s) {
  const auto& p = instance(static_cast<std::size_t>(s.range(0)));
  const auto f = ur::par::losses(p, weights(p.dim()));
  const ur::RobustKernel k(ur::KernelKind::WelschLeclerc, 2.0);
  for (auto _ : s) benchmark::DoNotOptimize(ur::serial::coefficient_weights(k, f));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}
void BM_weights_parallel(benchmark::State& s) {
  const auto& p = instance(static_cast<std::size_t>(s.range(0)));
  const auto f = ur::par::losses(p, weights(p.dim()));
  const ur::RobustKernel k(ur::KernelKind::WelschLeclerc, 2.0);
  for (auto _ : s) benchmark::DoNotOptimize(ur::par::coefficient_weights(k, f));
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

}  // namespace

BENCHMARK(BM_losses_serial)->Arg(1000)->Arg(100000);
BENCHMARK(BM_losses_parallel)->Arg(1000)->Arg(100000);
BENCHMARK(BM_gradient_serial)->Arg(1000)->Arg(100000);
BENCHMARK(BM_gradient_parallel)->Arg(1000)->Arg(100000);
BENCHMARK(BM_weights_serial)->Arg(1000)->Arg(100000);
BENCHMARK(BM_weights_parallel)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
