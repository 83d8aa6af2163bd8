#include "unirobust/duality.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "unirobust/errors.hpp"

namespace unirobust {

namespace {

void require_duality(const RobustKernel& k) {
  if (!k.supports_duality()) {
    throw UnsupportedOperation(k.id() + " does not admit an outlier process");
  }
}

double closed_form(OutlierProcessForm form, double c, double u) {
  switch (form) {
    case OutlierProcessForm::GemanMcClure: {
      const double s = 1.0 - std::sqrt(u);
      return c * s * s;
    }
    case OutlierProcessForm::Welsch:
      return u >= 1.0 ? 0.0 : c * (1.0 - u + u * std::log(u));
    case OutlierProcessForm::Cauchy:
      return c * (u - 1.0 - std::log(u));
    case OutlierProcessForm::LinearTruncated:
      return c * (1.0 - u);
    case OutlierProcessForm::Numeric:
      break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Phi on the closed interval [0, 1]; u = 0 only for bounded kernels.
double phi_closed(const RobustKernel& k, OutlierProcessForm form, double u) {
  if (u == 0.0) {
    const auto z = outlier_process_at_zero(k);
    if (!z) throw DomainError("Phi(0) diverges for unbounded " + k.id());
    return *z;
  }
  if (form != OutlierProcessForm::Numeric) return closed_form(form, k.c(), u);
  return outlier_process_numeric(k, u);
}

}  // namespace

OutlierProcess outlier_process_info(const RobustKernel& kernel) {
  OutlierProcess p;
  p.kernel_id = kernel.id();
  switch (kernel.kind()) {
    case KernelKind::GemanMcClure: p.form = OutlierProcessForm::GemanMcClure; break;
    case KernelKind::WelschLeclerc: p.form = OutlierProcessForm::Welsch; break;
    case KernelKind::CauchyLorentzian: p.form = OutlierProcessForm::Cauchy; break;
    case KernelKind::LinearTruncated: p.form = OutlierProcessForm::LinearTruncated; break;
    default: p.form = OutlierProcessForm::Numeric; break;
  }
  return p;
}

double outlier_process_numeric(const RobustKernel& kernel, double u) {
  require_duality(kernel);
  if (kernel.kind() == KernelKind::LinearTruncated) {
    throw UnsupportedOperation("LinearTruncated has no invertible derivative");
  }
  if (!(u > 0.0 && u <= 1.0)) throw DomainError("Phi requires u in (0, 1]");
  if (u >= kernel.weight(0.0)) return kernel.value(0.0);
  const double r = kernel.weight_inverse(u);
  return kernel.value(r) - u * r;
}

double outlier_process(const RobustKernel& kernel, double u) {
  require_duality(kernel);
  if (!(u > 0.0 && u <= 1.0)) throw DomainError("Phi requires u in (0, 1]");
  const auto form = outlier_process_info(kernel).form;
  if (form != OutlierProcessForm::Numeric) return closed_form(form, kernel.c(), u);
  return outlier_process_numeric(kernel, u);
}

std::optional<double> outlier_process_at_zero(const RobustKernel& kernel) {
  require_duality(kernel);
  const double s = kernel.supremum();
  if (std::isinf(s)) return std::nullopt;
  return s;
}

double duality_residual(const RobustKernel& kernel, double r) {
  require_duality(kernel);
  if (!(r > 0.0)) throw DomainError("duality residual requires r > 0");
  const double u = kernel.weight(r);
  const auto form = outlier_process_info(kernel).form;
  const double phi = phi_closed(kernel, form, u);
  return std::abs(kernel.value(r) - (r * u + phi));
}

double penalized_argmin_oracle(const RobustKernel& kernel, double f, int grid_size) {
  require_duality(kernel);
  if (grid_size < 1000) throw DomainError("penalized_argmin_oracle requires grid_size >= 1000");
  if (!(f >= 0.0)) throw DomainError("loss must be >= 0");
  const auto form = outlier_process_info(kernel).form;
  const bool bounded = outlier_process_at_zero(kernel).has_value();
  double best_u = 1.0;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= grid_size; ++j) {
    double u = static_cast<double>(j) / grid_size;
    if (j == 0 && !bounded) u = 1e-9;
    const double obj = u * f + phi_closed(kernel, form, u);
    if (obj < best) {
      best = obj;
      best_u = u;
    }
  }
  return best_u;
}

DualMinimum dual_objective_minimum(const RobustKernel& kernel, std::span<const double> losses,
                                   int grid_size) {
  require_duality(kernel);
  if (losses.empty()) return {};
  const auto form = outlier_process_info(kernel).form;
  const bool bounded = outlier_process_at_zero(kernel).has_value();
  std::vector<double> phi(static_cast<std::size_t>(grid_size) + 1);
  std::vector<double> us(phi.size());
  for (int j = 0; j <= grid_size; ++j) {
    double u = static_cast<double>(j) / grid_size;
    if (j == 0 && !bounded) u = 1e-9;
    us[j] = u;
    phi[j] = phi_closed(kernel, form, u);
  }
  DualMinimum out;
  for (double f : losses) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < phi.size(); ++j) best = std::min(best, us[j] * f + phi[j]);
    out.dual_value += best;
    out.primal_value += kernel.value(f);
  }
  out.dual_value /= static_cast<double>(losses.size());
  out.primal_value /= static_cast<double>(losses.size());
  return out;
}

}  // namespace unirobust
