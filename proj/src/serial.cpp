#include "unirobust/serial.hpp"

#include "unirobust/errors.hpp"

namespace unirobust::serial {

std::vector<double> losses(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  std::vector<double> out(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) {
    out[i] = model_loss(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w);
  }
  return out;
}

std::vector<double> clean_losses(const ProblemInstance& p, std::span<const double> w) {
  check_dim(p, w);
  std::vector<double> out(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) {
    out[i] = model_loss(p.kind, p.K, p.train[i].x, p.train[i].clean_label, w);
  }
  return out;
}

double mean_loss(const ProblemInstance& p, std::span<const double> w) {
  const auto f = losses(p, w);
  double s = 0.0;
  for (double v : f) s += v;
  return f.empty() ? 0.0 : s / static_cast<double>(f.size());
}

double mean_clean_loss(const ProblemInstance& p, std::span<const double> w) {
  const auto f = clean_losses(p, w);
  double s = 0.0;
  for (double v : f) s += v;
  return f.empty() ? 0.0 : s / static_cast<double>(f.size());
}

std::vector<double> weighted_gradient_mean(const ProblemInstance& p, std::span<const double> w,
                                           std::span<const std::size_t> batch,
                                           std::span<const double> weights) {
  check_dim(p, w);
  if (!weights.empty() && weights.size() != p.n()) throw ShapeError("weights must have length n");
  const bool full = batch.empty();
  const std::size_t m = full ? p.n() : batch.size();
  std::vector<double> g(p.dim(), 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t i = full ? j : batch[j];
    const double u = weights.empty() ? 1.0 : weights[i];
    model_loss_grad_accumulate(p.kind, p.K, p.train[i].x, p.train[i].observed_label, w, u, g);
  }
  if (m > 0) {
    for (double& v : g) v /= static_cast<double>(m);
  }
  return g;
}

std::vector<double> coefficient_weights(const RobustKernel& kernel, std::span<const double> losses) {
  std::vector<double> u(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) u[i] = kernel.weight(losses[i]);
  return u;
}

double mean_weight(const RobustKernel& kernel, std::span<const double> losses) {
  double s = 0.0;
  for (double f : losses) s += kernel.weight(f);
  return losses.empty() ? 0.0 : s / static_cast<double>(losses.size());
}

double robust_objective(const RobustKernel& kernel, std::span<const double> losses) {
  double s = 0.0;
  for (double f : losses) s += kernel.value(f);
  return losses.empty() ? 0.0 : s / static_cast<double>(losses.size());
}

}  // namespace unirobust::serial
