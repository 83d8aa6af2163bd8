#pragma once

#include <optional>
#include <span>
#include <string>

#include "unirobust/kernels.hpp"

namespace unirobust {

enum class OutlierProcessForm {
  GemanMcClure,     // c (1 - sqrt u)^2
  Welsch,           // c (1 - u + u ln u)
  Cauchy,           // c (u - 1 - ln u)
  LinearTruncated,  // c (1 - u)
  Numeric,          // sigma(r) - u r with r = (sigma')^{-1}(u)
};

/// Outlier process Phi attached to a kernel.
struct OutlierProcess {
  std::string kernel_id;
  OutlierProcessForm form = OutlierProcessForm::Numeric;
};

OutlierProcess outlier_process_info(const RobustKernel& kernel);

/// Phi(u) for u in (0, 1]. Uses the closed form when one is tagged.
/// Throws UnsupportedOperation for kernels outside the duality (SymmetricCE,
/// or parameters that make sigma' non-monotone) and DomainError for u outside (0, 1].
/// For u >= sigma'(0) the conjugate is attained at r = 0 and Phi(u) = sigma(0).
double outlier_process(const RobustKernel& kernel, double u);

/// Phi(u) through sigma((sigma')^{-1}(u)) - u (sigma')^{-1}(u), never the closed form.
/// Unsupported for LinearTruncated.
double outlier_process_numeric(const RobustKernel& kernel, double u);

/// Phi(0+) = sup sigma. Empty for unbounded kernels.
std::optional<double> outlier_process_at_zero(const RobustKernel& kernel);

/// |sigma(r) - (r sigma'(r) + Phi(sigma'(r)))| for r > 0.
double duality_residual(const RobustKernel& kernel, double r);

/// Brute-force argmin of u f + Phi(u) over u_j = j / grid_size, j = 0..grid_size.
/// u = 0 uses Phi(0+) for bounded kernels; for unbounded ones the grid starts at 1e-9.
/// Ties resolve to the smallest u. Requires grid_size >= 1000.
double penalized_argmin_oracle(const RobustKernel& kernel, double f, int grid_size);

struct DualMinimum {
  double dual_value = 0.0;    // (1/n) sum_i min_u [u f_i + Phi(u)] over the grid
  double primal_value = 0.0;  // (1/n) sum_i sigma(f_i)
};

/// Minimizes the dual objective per sample on the grid and compares with the primal.
DualMinimum dual_objective_minimum(const RobustKernel& kernel, std::span<const double> losses,
                                   int grid_size);

}  // namespace unirobust
