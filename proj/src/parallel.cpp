#include "unirobust/parallel.hpp"

#include "unirobust/errors.hpp"

namespace unirobust::par {

namespace {

// Kernel evaluation throws on invalid arguments; check serially before entering a parallel loop.
void check_losses(std::span<const double> losses) {
  for (double f : losses) {
    if (!(f >= 0.0)) throw DomainError("losses must be nonnegative and not NaN");
  }
}

}  // namespace

std::vector<double> losses(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  std::vector<double> out(p.n());
  parallel_for(p.n(), [&](std::size_t i) {
    out[i] = model_loss(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w);
  });
  return out;
}

std::vector<double> clean_losses(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  std::vector<double> out(p.n());
  parallel_for(p.n(), [&](std::size_t i) {
    out[i] = model_loss(p.kind, p.K, p.train[i].x, p.train[i].clean_label, w);
  });
  return out;
}

double mean_loss(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  if (p.n() == 0) return 0.0;
  const double s = blocked_sum(p.n(), [&](std::size_t i) {
    return model_loss(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w);
  });
  return s / static_cast<double>(p.n());
}

double mean_clean_loss(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  if (p.n() == 0) return 0.0;
  const double s = blocked_sum(p.n(), [&](std::size_t i) {
    return model_loss(p.kind, p.K, p.train[i].x, p.train[i].clean_label, w);
  });
  return s / static_cast<double>(p.n());
}

std::vector<double> weighted_gradient_mean(const ProblemInstance& p, std::span<const double> w,
                                           std::span<const std::size_t> batch,
                                           std::span<const double> weights) {
  check_dim(p, w);
  if (!weights.empty() && weights.size() != p.n()) throw ShapeError("weights must have length n");
  const bool full = batch.empty();
  const std::size_t m = full ? p.n() : batch.size();
  std::vector<double> g(p.dim(), 0.0);
  if (m == 0) return g;
  for (std::size_t i : batch) {
    if (i >= p.n()) throw ShapeError("batch index out of range");
  }
  blocked_vector_sum(
      m, p.dim(),
      [&](std::size_t j, std::span<double> acc) {
        const std::size_t i = full ? j : batch[j];
        const double u = weights.empty() ? 1.0 : weights[i];
        model_loss_grad_accumulate(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w, u, acc);
      },
      g);
  const double inv = static_cast<double>(m);
  for (double& v : g) v /= inv;
  return g;
}

std::vector<double> coefficient_weights(const RobustKernel& kernel, std::span<const double> losses) {
  check_losses(losses);
  std::vector<double> u(losses.size());
  parallel_for(losses.size(), [&](std::size_t i) { u[i] = kernel.weight(losses[i]); });
  return u;
}

double mean_weight(const RobustKernel& kernel, std::span<const double> losses) {
  check_losses(losses);
  if (losses.empty()) return 0.0;
  return blocked_sum(losses.size(), [&](std::size_t i) { return kernel.weight(losses[i]); }) /
         static_cast<double>(losses.size());
}

double robust_objective(const RobustKernel& kernel, std::span<const double> losses) {
  check_losses(losses);
  if (losses.empty()) return 0.0;
  return blocked_sum(losses.size(), [&](std::size_t i) { return kernel.value(losses[i]); }) /
         static_cast<double>(losses.size());
}

}  // namespace unirobust::par
