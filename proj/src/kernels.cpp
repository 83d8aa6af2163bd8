#include "unirobust/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "unirobust/errors.hpp"

namespace unirobust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log(1 + r / d) without forming r / d when it could overflow.
double log1p_ratio(double r, double d) {
  if (r <= d) return std::log1p(r / d);
  if (std::isinf(r)) return kInf;
  return std::log(r) - std::log(d) + std::log1p(d / r);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

bool is_positive_integer(double v) { return v >= 1.0 && std::floor(v) == v; }

}  // namespace

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::LinearTruncated: return "LinearTruncated";
    case KernelKind::GemanMcClure: return "GemanMcClure";
    case KernelKind::WelschLeclerc: return "WelschLeclerc";
    case KernelKind::CauchyLorentzian: return "CauchyLorentzian";
    case KernelKind::Charbonnier: return "Charbonnier";
    case KernelKind::Barron: return "Barron";
    case KernelKind::MeanError: return "MeanError";
    case KernelKind::GeneralizedCE: return "GeneralizedCE";
    case KernelKind::SymmetricCE: return "SymmetricCE";
    case KernelKind::TaylorCE: return "TaylorCE";
    case KernelKind::AsymGeneralizedCE: return "AsymGeneralizedCE";
    case KernelKind::AsymUnhinged: return "AsymUnhinged";
    case KernelKind::AsymExponential: return "AsymExponential";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(std::string_view name) {
  const std::string n = lower(name);
  for (KernelKind k : kAllKernelKinds) {
    if (n == lower(to_string(k))) return k;
  }
  struct Alias {
    const char* name;
    KernelKind kind;
  };
  static constexpr Alias aliases[] = {
      {"tl", KernelKind::LinearTruncated},      {"truncated", KernelKind::LinearTruncated},
      {"gm", KernelKind::GemanMcClure},         {"welsch", KernelKind::WelschLeclerc},
      {"cauchy", KernelKind::CauchyLorentzian}, {"mae", KernelKind::MeanError},
      {"mean_error", KernelKind::MeanError},    {"gce", KernelKind::GeneralizedCE},
      {"sce", KernelKind::SymmetricCE},         {"tce", KernelKind::TaylorCE},
      {"taylor", KernelKind::TaylorCE},         {"agce", KernelKind::AsymGeneralizedCE},
      {"aul", KernelKind::AsymUnhinged},        {"ael", KernelKind::AsymExponential},
  };
  for (const auto& a : aliases) {
    if (n == a.name) return a.kind;
  }
  throw ParameterDomainError("unknown kernel kind '" + std::string(name) + "'");
}

KernelShape KernelShape::defaults_for(KernelKind kind) {
  KernelShape s;
  switch (kind) {
    case KernelKind::AsymGeneralizedCE:
      s.a = 1.0;
      s.q = 0.5;
      break;
    case KernelKind::AsymUnhinged:
      s.a = 3.0;
      s.p = 2;
      break;
    case KernelKind::AsymExponential:
      s.a = 2.0;
      break;
    default:
      break;
  }
  return s;
}

RobustKernel::RobustKernel(KernelKind kind, double c)
    : RobustKernel(kind, c, KernelShape::defaults_for(kind), true) {}

RobustKernel::RobustKernel(KernelKind kind, double c, KernelShape shape, bool normalize)
    : kind_(kind), c_(c), shape_(shape), normalize_(normalize) {
  validate();
  if (normalize_ && (kind_ == KernelKind::Barron || kind_ == KernelKind::AsymGeneralizedCE ||
                     kind_ == KernelKind::AsymUnhinged)) {
    norm_ = 1.0 / raw_weight(0.0);
  }
}

void RobustKernel::validate() const {
  if (!(c_ > 0.0) || !std::isfinite(c_)) {
    throw ParameterDomainError("kernel scale c must be positive and finite, got " + fmt_num(c_));
  }
  const auto& s = shape_;
  switch (kind_) {
    case KernelKind::Barron:
      if (!std::isfinite(s.alpha) || std::abs(s.alpha) < 1e-9 || std::abs(s.alpha - 2.0) < 1e-9) {
        throw ParameterDomainError("Barron alpha must be finite and differ from 0 and 2, got " +
                                   fmt_num(s.alpha));
      }
      break;
    case KernelKind::GeneralizedCE:
    case KernelKind::AsymGeneralizedCE:
      if (!(s.q > 0.0) || !(s.q <= 1.0 || is_positive_integer(s.q))) {
        throw ParameterDomainError("q must be in (0, 1] or a positive integer, got " + fmt_num(s.q));
      }
      if (kind_ == KernelKind::AsymGeneralizedCE && !(s.a > 0.0 && std::isfinite(s.a))) {
        throw ParameterDomainError("AGCE a must be positive, got " + fmt_num(s.a));
      }
      break;
    case KernelKind::SymmetricCE:
      if (!(s.A > 0.0 && std::isfinite(s.A))) {
        throw ParameterDomainError("SCE A must be positive, got " + fmt_num(s.A));
      }
      break;
    case KernelKind::TaylorCE:
      if (s.t < 1) throw ParameterDomainError("TaylorCE t must be >= 1");
      break;
    case KernelKind::AsymUnhinged:
      if (!(s.a > 1.0 && std::isfinite(s.a))) {
        throw ParameterDomainError("AUL a must exceed 1, got " + fmt_num(s.a));
      }
      if (s.p < 1) throw ParameterDomainError("AUL p must be >= 1");
      break;
    case KernelKind::AsymExponential:
      if (!(s.a > 0.0 && std::isfinite(s.a))) {
        throw ParameterDomainError("AEL a must be positive, got " + fmt_num(s.a));
      }
      break;
    default:
      break;
  }
}

RobustKernel RobustKernel::with_scale(double c) const {
  return RobustKernel(kind_, c, shape_, normalize_);
}

bool RobustKernel::has_scale() const {
  switch (kind_) {
    case KernelKind::LinearTruncated:
    case KernelKind::GemanMcClure:
    case KernelKind::WelschLeclerc:
    case KernelKind::CauchyLorentzian:
    case KernelKind::Charbonnier:
    case KernelKind::Barron:
      return true;
    default:
      return false;
  }
}

bool RobustKernel::has_invertible_weight() const {
  switch (kind_) {
    case KernelKind::LinearTruncated:
    case KernelKind::SymmetricCE:
      return false;
    case KernelKind::Barron:
      return shape_.alpha < 2.0;
    case KernelKind::AsymExponential:
      // d/dr log sigma' = e^{-r}/a - 1
      return shape_.a >= 1.0;
    case KernelKind::AsymUnhinged:
      // d/dr log sigma' = (p e^{-r} - a) / (a - e^{-r})
      return shape_.a >= static_cast<double>(shape_.p);
    default:
      return true;
  }
}

bool RobustKernel::supports_duality() const {
  return kind_ == KernelKind::LinearTruncated || has_invertible_weight();
}

std::string RobustKernel::id() const {
  std::string out(to_string(kind_));
  std::string args;
  auto add = [&](const char* key, double v) {
    if (!args.empty()) args += ",";
    args += key;
    args += "=";
    args += fmt_num(v);
  };
  if (has_scale()) add("c", c_);
  switch (kind_) {
    case KernelKind::Barron: add("alpha", shape_.alpha); break;
    case KernelKind::GeneralizedCE: add("q", shape_.q); break;
    case KernelKind::SymmetricCE: add("A", shape_.A); break;
    case KernelKind::TaylorCE: add("t", shape_.t); break;
    case KernelKind::AsymGeneralizedCE:
      add("a", shape_.a);
      add("q", shape_.q);
      break;
    case KernelKind::AsymUnhinged:
      add("a", shape_.a);
      add("p", shape_.p);
      break;
    case KernelKind::AsymExponential: add("a", shape_.a); break;
    default: break;
  }
  if (!normalize_ && norm_ == 1.0 &&
      (kind_ == KernelKind::Barron || kind_ == KernelKind::AsymGeneralizedCE ||
       kind_ == KernelKind::AsymUnhinged)) {
    args += args.empty() ? "raw" : ",raw";
  }
  return out + "(" + args + ")";
}

double RobustKernel::raw_value(double r) const {
  const double c = c_;
  const auto& sh = shape_;
  switch (kind_) {
    case KernelKind::LinearTruncated:
      return std::min(r, c);
    case KernelKind::GemanMcClure: {
      const double s = r / c;
      return s <= 1.0 ? c * s / (1.0 + s) : c / (1.0 + 1.0 / s);
    }
    case KernelKind::WelschLeclerc:
      return -c * std::expm1(-r / c);
    case KernelKind::CauchyLorentzian:
      return c * log1p_ratio(r, c);
    case KernelKind::Charbonnier: {
      const double s = r / c;
      if (s < 1.0) return 2.0 * c * s / (std::sqrt(1.0 + s) + 1.0);
      return 2.0 * (std::sqrt(c) * std::sqrt(r + c) - c);
    }
    case KernelKind::Barron: {
      const double d = std::abs(sh.alpha - 2.0);
      const double L = log1p_ratio(r, c * d);
      return c * d / sh.alpha * std::expm1(0.5 * sh.alpha * L);
    }
    case KernelKind::MeanError:
      return -std::expm1(-r);
    case KernelKind::GeneralizedCE:
      return -std::expm1(-sh.q * r) / sh.q;
    case KernelKind::SymmetricCE:
      return (r + sh.A * std::expm1(-r)) / (1.0 + sh.A);
    case KernelKind::TaylorCE: {
      const double v = -std::expm1(-r);
      double acc = 0.0;
      double vm = 1.0;
      for (int m = 1; m <= sh.t; ++m) {
        vm *= v;
        acc += vm / m;
      }
      return acc;
    }
    case KernelKind::AsymGeneralizedCE: {
      // ((a+1)^q - (a+e^{-r})^q) / (q a^{q-1}), written around (a+1)^q to avoid cancellation
      const double a = sh.a, q = sh.q;
      const double ratio_log = std::log1p(std::expm1(-r) / (a + 1.0));
      return -std::pow(a + 1.0, q) * std::expm1(q * ratio_log) / (q * std::pow(a, q - 1.0));
    }
    case KernelKind::AsymUnhinged: {
      const double a = sh.a, p = sh.p;
      const double ratio_log = std::log1p(-std::expm1(-r) / (a - 1.0));
      return std::pow(a - 1.0, p) * std::expm1(p * ratio_log) / (p * std::pow(a, p - 1.0));
    }
    case KernelKind::AsymExponential: {
      const double v = -std::expm1(-r);
      return sh.a * std::exp(v / sh.a);
    }
  }
  return 0.0;
}

double RobustKernel::raw_weight(double r) const {
  const double c = c_;
  const auto& sh = shape_;
  switch (kind_) {
    case KernelKind::LinearTruncated:
      return r <= c ? 1.0 : 0.0;
    case KernelKind::GemanMcClure: {
      const double d = 1.0 + r / c;
      return 1.0 / (d * d);
    }
    case KernelKind::WelschLeclerc:
      return std::exp(-r / c);
    case KernelKind::CauchyLorentzian:
      return c / (c + r);
    case KernelKind::Charbonnier:
      return std::sqrt(c / (c + r));
    case KernelKind::Barron: {
      const double d = std::abs(sh.alpha - 2.0);
      const double L = log1p_ratio(r, c * d);
      return 0.5 * std::exp((0.5 * sh.alpha - 1.0) * L);
    }
    case KernelKind::MeanError:
      return std::exp(-r);
    case KernelKind::GeneralizedCE:
      return std::exp(-sh.q * r);
    case KernelKind::SymmetricCE:
      return (1.0 - sh.A * std::exp(-r)) / (1.0 + sh.A);
    case KernelKind::TaylorCE:
      // sum_{m<t} v^m e^{-r} telescopes to 1 - v^t with v = 1 - e^{-r}
      return -std::expm1(sh.t * std::log1p(-std::exp(-r)));
    case KernelKind::AsymGeneralizedCE:
      return std::exp((sh.q - 1.0) * std::log1p(std::exp(-r) / sh.a) - r);
    case KernelKind::AsymUnhinged:
      return std::exp((sh.p - 1.0) * std::log1p(-std::exp(-r) / sh.a) - r);
    case KernelKind::AsymExponential:
      return std::exp(-std::expm1(-r) / sh.a - r);
  }
  return 0.0;
}

double RobustKernel::value(double r) const {
  if (!(r >= 0.0)) throw DomainError("kernel argument must be >= 0, got " + fmt_num(r));
  return norm_ * raw_value(r);
}

double RobustKernel::weight(double r) const {
  if (!(r >= 0.0)) throw DomainError("kernel argument must be >= 0, got " + fmt_num(r));
  return norm_ * raw_weight(r);
}

double RobustKernel::supremum() const {
  const double c = c_;
  const auto& sh = shape_;
  double raw = kInf;
  switch (kind_) {
    case KernelKind::LinearTruncated:
    case KernelKind::GemanMcClure:
    case KernelKind::WelschLeclerc:
      raw = c;
      break;
    case KernelKind::Barron:
      if (sh.alpha < 0.0) raw = c * std::abs(sh.alpha - 2.0) / std::abs(sh.alpha);
      break;
    case KernelKind::MeanError:
      raw = 1.0;
      break;
    case KernelKind::GeneralizedCE:
      raw = 1.0 / sh.q;
      break;
    case KernelKind::TaylorCE: {
      raw = 0.0;
      for (int m = 1; m <= sh.t; ++m) raw += 1.0 / m;
      break;
    }
    case KernelKind::AsymGeneralizedCE:
      raw = (std::pow(sh.a + 1.0, sh.q) - std::pow(sh.a, sh.q)) / (sh.q * std::pow(sh.a, sh.q - 1.0));
      break;
    case KernelKind::AsymUnhinged:
      raw = (std::pow(sh.a, sh.p) - std::pow(sh.a - 1.0, sh.p)) / (sh.p * std::pow(sh.a, sh.p - 1.0));
      break;
    case KernelKind::AsymExponential:
      raw = sh.a * std::exp(1.0 / sh.a);
      break;
    default:
      break;
  }
  return norm_ * raw;
}

double RobustKernel::closed_form_inverse(double u_raw, bool& available) const {
  const double c = c_;
  const auto& sh = shape_;
  available = true;
  switch (kind_) {
    case KernelKind::GemanMcClure: return c * (1.0 / std::sqrt(u_raw) - 1.0);
    case KernelKind::WelschLeclerc: return -c * std::log(u_raw);
    case KernelKind::CauchyLorentzian: return c * (1.0 / u_raw - 1.0);
    case KernelKind::Charbonnier: return c * (1.0 / (u_raw * u_raw) - 1.0);
    case KernelKind::Barron: {
      const double d = std::abs(sh.alpha - 2.0);
      const double L = std::log(2.0 * u_raw) / (0.5 * sh.alpha - 1.0);
      return c * d * std::expm1(L);
    }
    case KernelKind::MeanError: return -std::log(u_raw);
    case KernelKind::GeneralizedCE: return -std::log(u_raw) / sh.q;
    case KernelKind::TaylorCE: return -std::log(-std::expm1(std::log1p(-u_raw) / sh.t));
    default:
      available = false;
      return 0.0;
  }
}

double RobustKernel::weight_inverse(double u) const {
  if (!has_invertible_weight()) {
    throw UnsupportedOperation(id() + " has no invertible derivative");
  }
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("weight inverse requires u in (0, 1), got " + fmt_num(u));
  }
  const double top = weight(0.0);
  if (!(u < top)) {
    throw DomainError("u = " + fmt_num(u) + " is not below sigma'(0) = " + fmt_num(top));
  }
  bool available = false;
  const double r = closed_form_inverse(u / norm_, available);
  if (available) return std::max(r, 0.0);

  double hi = std::max(c_, 1.0);
  for (int i = 0; weight(hi) >= u; ++i) {
    hi *= 2.0;
    if (i > 2000 || std::isinf(hi)) throw DomainError("weight inverse: failed to bracket u = " + fmt_num(u));
  }
  auto f = [&](double r_) { return weight(r_) - u; };
  boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 2);
  std::uintmax_t max_iter = 400;
  const auto [lo_r, hi_r] = boost::math::tools::bisect(f, 0.0, hi, tol, max_iter);
  const double mid = 0.5 * (lo_r + hi_r);
  return std::abs(f(lo_r)) < std::abs(f(mid)) ? lo_r : mid;
}

// ---------------------------------------------------------------------------
// Spec parsing and JSON

namespace {

double parse_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParameterDomainError("kernel spec: bad numeric value for '" + std::string(key) + "': '" +
                               std::string(text) + "'");
  }
  return v;
}

int parse_int(std::string_view key, std::string_view text) {
  const double v = parse_double(key, text);
  if (std::floor(v) != v) {
    throw ParameterDomainError("kernel spec: '" + std::string(key) + "' must be an integer");
  }
  return static_cast<int>(v);
}

bool parse_bool(std::string_view text) {
  const std::string t = lower(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ParameterDomainError("kernel spec: bad boolean '" + std::string(text) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

RobustKernel parse_kernel_spec(std::string_view spec) {
  spec = trim(spec);
  const auto colon = spec.find(':');
  const KernelKind kind = parse_kernel_kind(trim(spec.substr(0, colon)));
  double c = 1.0;
  KernelShape shape = KernelShape::defaults_for(kind);
  bool normalize = true;
  if (colon != std::string_view::npos) {
    std::string_view rest = spec.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      std::string_view item = trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw ParameterDomainError("kernel spec: expected key=value, got '" + std::string(item) + "'");
      }
      const std::string_view key = trim(item.substr(0, eq));
      const std::string_view val = trim(item.substr(eq + 1));
      if (key == "c") c = parse_double(key, val);
      else if (key == "alpha") shape.alpha = parse_double(key, val);
      else if (key == "q") shape.q = parse_double(key, val);
      else if (key == "A") shape.A = parse_double(key, val);
      else if (key == "t") shape.t = parse_int(key, val);
      else if (key == "a") shape.a = parse_double(key, val);
      else if (key == "p") shape.p = parse_int(key, val);
      else if (key == "normalize") normalize = parse_bool(val);
      else throw ParameterDomainError("kernel spec: unknown key '" + std::string(key) + "'");
    }
  }
  return RobustKernel(kind, c, shape, normalize);
}

nlohmann::json kernel_to_json(const RobustKernel& k) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(k.kind()));
  j["c"] = k.c();
  const auto& s = k.shape();
  switch (k.kind()) {
    case KernelKind::Barron: j["alpha"] = s.alpha; break;
    case KernelKind::GeneralizedCE: j["q"] = s.q; break;
    case KernelKind::SymmetricCE: j["A"] = s.A; break;
    case KernelKind::TaylorCE: j["t"] = s.t; break;
    case KernelKind::AsymGeneralizedCE:
      j["a"] = s.a;
      j["q"] = s.q;
      break;
    case KernelKind::AsymUnhinged:
      j["a"] = s.a;
      j["p"] = s.p;
      break;
    case KernelKind::AsymExponential: j["a"] = s.a; break;
    default: break;
  }
  j["normalize"] = k.normalize();
  return j;
}

RobustKernel kernel_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw ParameterDomainError("kernel JSON must be an object with a 'kind' field");
  }
  const KernelKind kind = parse_kernel_kind(j.at("kind").get<std::string>());
  KernelShape s = KernelShape::defaults_for(kind);
  const double c = j.value("c", 1.0);
  s.alpha = j.value("alpha", s.alpha);
  s.q = j.value("q", s.q);
  s.A = j.value("A", s.A);
  s.t = j.value("t", s.t);
  s.a = j.value("a", s.a);
  s.p = j.value("p", s.p);
  return RobustKernel(kind, c, s, j.value("normalize", true));
}

// ---------------------------------------------------------------------------
// Conformance

ConformanceReport conformance_check(const RobustKernel& kernel, const LogGrid& grid) {
  ConformanceReport rep;
  rep.kernel_id = kernel.id();
  rep.kernel = kernel_to_json(kernel);
  const double c = kernel.c();
  const double lo = grid.lo_factor * c;
  const double hi = grid.hi_factor * c;
  const int n = std::max(grid.points, 2);

  rep.cond_i.measured = std::abs(kernel.weight(lo) - 1.0);
  rep.cond_i.pass = rep.cond_i.measured < kConformanceTol;

  rep.cond_ii.measured = kernel.weight(hi);
  rep.cond_ii.pass = std::abs(rep.cond_ii.measured) < kConformanceTol;

  const double log_lo = std::log(lo), log_hi = std::log(hi);
  double prev = kernel.weight(lo);
  double worst = -kInf;
  for (int k = 1; k < n; ++k) {
    const double r = k == n - 1 ? hi : std::exp(log_lo + (log_hi - log_lo) * k / (n - 1));
    const double cur = kernel.weight(r);
    worst = std::max(worst, cur - prev);
    prev = cur;
  }
  rep.cond_iii.measured = std::max(worst, 0.0);
  rep.cond_iii.pass = worst <= kMonotoneTol;
  rep.step_function = kernel.kind() == KernelKind::LinearTruncated;
  rep.value_at_zero = kernel.value(0.0);
  return rep;
}

nlohmann::json to_json(const ConformanceReport& r) {
  auto cond = [](const ConditionResult& c) {
    return nlohmann::json{{"pass", c.pass}, {"measured", c.measured}};
  };
  return nlohmann::json{
      {"kernel_id", r.kernel_id},     {"kernel", r.kernel},
      {"cond_i", cond(r.cond_i)},     {"cond_ii", cond(r.cond_ii)},
      {"cond_iii", cond(r.cond_iii)}, {"step_function", r.step_function},
      {"value_at_zero", r.value_at_zero}, {"all_pass", r.all_pass()},
  };
}

}  // namespace unirobust
