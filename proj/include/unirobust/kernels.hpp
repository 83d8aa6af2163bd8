#pragma once

#include <array>
#include <string>
#include <string_view>

#include "json.hpp"

namespace unirobust {

enum class KernelKind {
  LinearTruncated,
  GemanMcClure,
  WelschLeclerc,
  CauchyLorentzian,
  Charbonnier,
  Barron,
  MeanError,
  GeneralizedCE,
  SymmetricCE,
  TaylorCE,
  AsymGeneralizedCE,
  AsymUnhinged,
  AsymExponential,
};

inline constexpr std::array<KernelKind, 13> kAllKernelKinds = {
    KernelKind::LinearTruncated,   KernelKind::GemanMcClure, KernelKind::WelschLeclerc,
    KernelKind::CauchyLorentzian,  KernelKind::Charbonnier,  KernelKind::Barron,
    KernelKind::MeanError,         KernelKind::GeneralizedCE, KernelKind::SymmetricCE,
    KernelKind::TaylorCE,          KernelKind::AsymGeneralizedCE, KernelKind::AsymUnhinged,
    KernelKind::AsymExponential,
};

std::string_view to_string(KernelKind kind);

/// Accepts canonical names ("GemanMcClure") and short aliases ("gm", "tl", "gce", ...),
/// case-insensitively. Throws ParameterDomainError for unknown names.
KernelKind parse_kernel_kind(std::string_view name);

/// Shape parameters. Only the fields relevant to a kind are read; the rest are ignored.
struct KernelShape {
  double alpha = 1.0;  // Barron; alpha != 0, alpha != 2
  double q = 0.7;      // GCE / AGCE; q in (0, 1] or a positive integer
  double A = 1.0;      // SCE; A > 0
  int t = 2;           // TaylorCE; t >= 1
  double a = 1.0;      // AGCE, AEL: a > 0; AUL: a > 1
  int p = 2;           // AUL; p >= 1

  static KernelShape defaults_for(KernelKind kind);
  friend bool operator==(const KernelShape&, const KernelShape&) = default;
};

/// A robust loss kernel sigma_c applied to a nonnegative per-sample loss r.
///
/// The first six kinds follow the pattern sigma_c(r) = c * sigma_1(r / c). The
/// cross-entropy family (MeanError onwards) is defined directly on the
/// cross-entropy value and has no scale; `c` is stored but does not enter the
/// formulas for those kinds.
///
/// With `normalize` set, Barron, AsymGeneralizedCE and AsymUnhinged are divided
/// by their analytic slope at zero so that sigma'(0) = 1. Every other kind
/// already has unit slope at zero except SymmetricCE, which is never rescaled.
///
/// Instances are immutable values; all member functions are pure.
class RobustKernel {
 public:
  explicit RobustKernel(KernelKind kind, double c = 1.0);
  RobustKernel(KernelKind kind, double c, KernelShape shape, bool normalize = true);

  KernelKind kind() const { return kind_; }
  double c() const { return c_; }
  const KernelShape& shape() const { return shape_; }
  bool normalize() const { return normalize_; }

  /// Same kernel with a different scale.
  RobustKernel with_scale(double c) const;

  /// sigma_c(r). Requires r >= 0 (DomainError otherwise).
  double value(double r) const;
  /// sigma'_c(r). For LinearTruncated this is 1{r <= c}.
  double weight(double r) const;
  /// (sigma'_c)^{-1}(u) for u in (0, 1). Closed form where one exists, otherwise a
  /// bracketing bisection with |sigma'(r) - u| <= 1e-10.
  double weight_inverse(double u) const;

  /// sup_r sigma_c(r); +infinity for unbounded kernels.
  double supremum() const;
  /// Multiplicative factor applied to the raw formula (1 unless normalized).
  double normalization() const { return norm_; }

  /// True for the six kinds that carry a scale parameter.
  bool has_scale() const;
  /// True when sigma' is strictly decreasing for the current parameters.
  bool has_invertible_weight() const;
  /// True when the kernel can enter the modified duality (strictly decreasing
  /// sigma', or the truncated kernel with its piecewise outlier process).
  bool supports_duality() const;

  /// Human-readable identifier such as "GemanMcClure(c=1)".
  std::string id() const;

  friend bool operator==(const RobustKernel&, const RobustKernel&) = default;

 private:
  double raw_value(double r) const;
  double raw_weight(double r) const;
  double closed_form_inverse(double u_raw, bool& available) const;
  void validate() const;

  KernelKind kind_;
  double c_;
  KernelShape shape_;
  bool normalize_;
  double norm_ = 1.0;
};

inline double kernel_eval(const RobustKernel& k, double r) { return k.value(r); }
inline double kernel_weight(const RobustKernel& k, double r) { return k.weight(r); }
inline double kernel_weight_inverse(const RobustKernel& k, double u) { return k.weight_inverse(u); }

/// Parses "kind[:key=value,...]", e.g. "gm:c=2" or "barron:alpha=1,normalize=false".
/// Recognized keys: c, alpha, q, A, t, a, p, normalize.
RobustKernel parse_kernel_spec(std::string_view spec);

nlohmann::json kernel_to_json(const RobustKernel& kernel);
/// Reads {kind, c, <shape params>, normalize}; missing fields take kind defaults.
RobustKernel kernel_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Conformance

/// Log-spaced grid on [lo_factor * c, hi_factor * c].
struct LogGrid {
  double lo_factor = 1e-8;
  double hi_factor = 1e6;
  int points = 200;
};

struct ConditionResult {
  bool pass = false;
  double measured = 0.0;
};

struct ConformanceReport {
  std::string kernel_id;
  nlohmann::json kernel;
  /// |sigma'(lo) - 1|, pass when < 1e-3.
  ConditionResult cond_i;
  /// sigma'(hi), pass when < 1e-3.
  ConditionResult cond_ii;
  /// Largest increment sigma'(r_{k+1}) - sigma'(r_k) on the grid, pass when <= 1e-12.
  ConditionResult cond_iii;
  /// sigma' is a step function (non-strict concavity, no inverse).
  bool step_function = false;
  double value_at_zero = 0.0;

  bool all_pass() const { return cond_i.pass && cond_ii.pass && cond_iii.pass; }
};

inline constexpr double kConformanceTol = 1e-3;
inline constexpr double kMonotoneTol = 1e-12;

/// Evaluates the three kernel conditions numerically. Never throws on
/// failure; failing conditions are recorded in the report.
ConformanceReport conformance_check(const RobustKernel& kernel, const LogGrid& grid = {});

nlohmann::json to_json(const ConformanceReport& report);

}  // namespace unirobust
