#pragma once

#include <span>
#include <vector>

#include <omp.h>

#include "unirobust/kernels.hpp"
#include "unirobust/problems.hpp"

/// Data-parallel passes over a dataset. Reductions use fixed-size blocks whose
/// partial sums are combined in block order, so results are bit-identical for
/// any thread count. Inside an enclosing parallel region the passes run serially.
namespace unirobust::par {

inline constexpr std::size_t kBlock = 256;
inline constexpr std::size_t kParallelThreshold = 2048;

template <class F>
double blocked_sum(std::size_t n, F&& f) {
  const std::size_t nb = (n + kBlock - 1) / kBlock;
  if (nb <= 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += f(i);
    return s;
  }
  std::vector<double> partial(nb);
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold && !omp_in_parallel())
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    double s = 0.0;
    for (std::size_t i = b * kBlock; i < end; ++i) s += f(i);
    partial[b] = s;
  }
  double s = 0.0;
  for (double v : partial) s += v;
  return s;
}

/// out = sum_i f(i, acc) where f adds its contribution into the dim-length acc.
template <class F>
void blocked_vector_sum(std::size_t n, std::size_t dim, F&& f, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t nb = (n + kBlock - 1) / kBlock;
  if (nb <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i, out);
    return;
  }
  std::vector<double> partial(nb * dim, 0.0);
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold && !omp_in_parallel())
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    std::span<double> acc(partial.data() + b * dim, dim);
    for (std::size_t i = b * kBlock; i < end; ++i) f(i, acc);
  }
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t j = 0; j < dim; ++j) out[j] += partial[b * dim + j];
  }
}

template <class F>
void parallel_for(std::size_t n, F&& f) {
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold && !omp_in_parallel())
  for (std::size_t i = 0; i < n; ++i) f(i);
}

/// f_i(w) over the training set.
std::vector<double> losses(const ProblemInstance& p, std::span<const double> w);
/// f_{i,I}(w) over the training set.
std::vector<double> clean_losses(const ProblemInstance& p, std::span<const double> w);
double mean_loss(const ProblemInstance& p, std::span<const double> w);
double mean_clean_loss(const ProblemInstance& p, std::span<const double> w);

/// (1/|batch|) sum_{i in batch} u_i grad f_i(w). An empty batch means the full
/// training set in index order. `weights` is indexed by sample (length n); empty
/// means u_i = 1.
std::vector<double> weighted_gradient_mean(const ProblemInstance& p, std::span<const double> w,
                                           std::span<const std::size_t> batch,
                                           std::span<const double> weights);

/// u_i = sigma'_c(f_i).
std::vector<double> coefficient_weights(const RobustKernel& kernel, std::span<const double> losses);
/// (1/n) sum_i sigma'_c(f_i).
double mean_weight(const RobustKernel& kernel, std::span<const double> losses);
/// (1/n) sum_i sigma_c(f_i).
double robust_objective(const RobustKernel& kernel, std::span<const double> losses);

}  // namespace unirobust::par
