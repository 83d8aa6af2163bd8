#pragma once

#include <span>
#include <vector>

#include "unirobust/kernels.hpp"
#include "unirobust/problems.hpp"

/// Plain single-loop references for the passes in unirobust::par. Used by the
/// tests and the benchmark; results agree with par:: up to summation order.
namespace unirobust::serial {

std::vector<double> losses(const ProblemInstance& p, std::span<const double> w);
std::vector<double> clean_losses(const ProblemInstance& p, std::span<const double> w);
double mean_loss(const ProblemInstance& p, std::span<const double> w);
double mean_clean_loss(const ProblemInstance& p, std::span<const double> w);
std::vector<double> weighted_gradient_mean(const ProblemInstance& p, std::span<const double> w,
                                           std::span<const std::size_t> batch,
                                           std::span<const double> weights);
std::vector<double> coefficient_weights(const RobustKernel& kernel, std::span<const double> losses);
double mean_weight(const RobustKernel& kernel, std::span<const double> losses);
double robust_objective(const RobustKernel& kernel, std::span<const double> losses);

}  // namespace unirobust::serial
