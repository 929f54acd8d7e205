#pragma once

// Elastic enhancement factor F(eta|kappa) for broken time-reversal symmetry:
// the direct route through the Laplace transform of B2, the two Psi-based
// representations used as cross-checks, and the closed-form approximations.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "elastic/formfactor.hpp"
#include "elastic/numerics.hpp"
#include "elastic/parameters.hpp"

namespace elastic {

enum class Method { exact, repr_small_kappa, repr_large_kappa, series_small_kappa, approx_large_kappa };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::exact: return "exact";
    case Method::repr_small_kappa: return "repr-small-kappa";
    case Method::repr_large_kappa: return "repr-large-kappa";
    case Method::series_small_kappa: return "series";
    case Method::approx_large_kappa: return "large-kappa";
  }
  return "unknown";
}

struct EnhancementValue {
  double f = 2.0;
  Method method = Method::exact;
  double error_estimate = 0.0;
  // set when an approximation is evaluated outside the regime it was built for
  bool outside_regime = false;
};

/// GUE enhancement 1 + (1 - exp(-eta)) / eta, equal to 2 at eta = 0.
inline double f_gue(double eta) {
  if (eta == 0.0) return 2.0;
  return 1.0 - std::expm1(-eta) / eta;
}

namespace detail {

// exp(-kappa s (sqrt(s) - 1)^2) * Xi(2 kappa s^{3/2}): the Psi kernel without
// the Laplace factor. The exponent is the non-positive rewrite of
// -kappa s (s + 1) + 2 kappa s^{3/2}.
inline double psi_kernel(double s, double kappa) {
  const double r = std::sqrt(s);
  const double gap = r - 1.0;
  return std::exp(-kappa * s * gap * gap) * xi(2.0 * kappa * s * r);
}

inline std::vector<double> psi_breakpoints(double eta) {
  std::vector<double> pts{0.0};
  for (double c : {1.0, 4.0})
    if (c / eta < 0.81) pts.push_back(c / eta);
  for (double p : {0.81, 1.0, 1.21, 4.0}) pts.push_back(p);
  return pts;
}

// Tolerance for an inner integral whose value enters the outer integrand
// multiplied by `weight`.
inline QuadratureConfig inner_config(const QuadratureConfig& cfg, double weight) {
  QuadratureConfig inner = cfg.nested();
  inner.abs_tol = std::min(1e-4, inner.abs_tol / std::max(weight, 1e-8));
  return inner;
}

}  // namespace detail

inline IntegralResult psi_detailed(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  const double e = eta.value();
  if (!(e > 0.0)) throw DomainError("psi needs eta > 0");
  if (kappa.is_zero()) return {1.0, 0.0, 0};
  if (kappa.is_infinite()) return {0.0, 0.0, 0};
  const double k = kappa.value();
  auto f = [=](double s) { return e * std::exp(-e * s) * detail::psi_kernel(s, k); };
  const auto pts = detail::psi_breakpoints(e);
  IntegralResult head = integrate_panels(f, pts, cfg);
  // s >= 4: (sqrt(s) - 1)^2 >= s/4 >= 1 and Xi <= 1
  const IntegralResult tail = integrate_semi_infinite(f, 4.0, DecayBound{e, e + k}, cfg);
  head.value += tail.value;
  head.error_estimate += tail.error_estimate;
  head.evaluations += tail.evaluations;
  return head;
}

/// Psi(eta|kappa) = eta Integral_0^inf exp(-kappa s(s+1) - eta s) I1(2 kappa s^{3/2}) / (kappa s^{3/2}) ds.
inline double psi(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  return psi_detailed(eta, kappa, cfg).value;
}

/// F = 2 - eta Integral exp(-eta s) B2(s|kappa) ds (plus 1 for beta = 1 in the regular limit).
inline EnhancementValue enhancement_exact(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {},
                                          SymmetryClass beta = SymmetryClass::unitary) {
  if (beta == SymmetryClass::orthogonal) {
    // B2 vanishes identically only at the regular end; no crossover form
    // factor exists for beta = 1.
    if (!kappa.is_zero())
      throw UnsupportedCase("beta = 1 enhancement is only available at kappa = 0");
    return {3.0, Method::exact, 0.0, false};
  }
  if (eta.value() == 0.0) return {2.0, Method::exact, 0.0, false};
  const IntegralResult l = laplace_b2_detailed(eta, kappa, cfg);
  return {2.0 - l.value, Method::exact, l.error_estimate, false};
}

/// Small-kappa representation
///   F = 1 + Psi + eta d^2/deta^2 [ (1/eta) Integral_0^kappa Psi(eta|k') dk' ],
/// evaluated as 1 + Psi + eta Integral s^2 exp(-eta s) J(s, kappa) ds with
/// J(s, kappa) = Integral_0^kappa exp(-k' s (sqrt(s)-1)^2) Xi(2 k' s^{3/2}) dk'.
inline EnhancementValue repr_small_kappa(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  const double e = eta.value();
  if (!(e > 0.0)) throw DomainError("repr_small_kappa needs eta > 0");
  if (kappa.is_infinite()) throw DomainError("repr_small_kappa needs a finite kappa");
  if (kappa.is_zero()) return {2.0, Method::repr_small_kappa, 0.0, false};
  const double k = kappa.value();

  auto integrand = [&](double s) {
    if (s == 0.0) return 0.0;
    const double weight = e * s * s * std::exp(-e * s);
    const QuadratureConfig inner = detail::inner_config(cfg, weight);
    const double r = std::sqrt(s);
    const double c = s * (r - 1.0) * (r - 1.0);
    double upper = k;
    if (c > 0.0) {
      // drop kappa' beyond which exp(-c kappa') / c is below the inner budget
      const double cut = std::log(1.0 / (c * inner.abs_tol * inner.tail_cutoff)) / c;
      upper = std::min(k, std::max(cut, 0.0));
    }
    if (upper <= 0.0) return 0.0;
    auto kernel = [&](double kp) { return std::exp(-kp * c) * xi(2.0 * kp * s * r); };
    return weight * integrate_finite(kernel, 0.0, upper, inner).value;
  };
  const auto pts = detail::psi_breakpoints(e);
  IntegralResult second = integrate_panels(integrand, pts, cfg);
  // s^2 J(s, kappa) <= s^2 J(s, inf) = min(s, 1)
  const IntegralResult tail = integrate_semi_infinite(integrand, 4.0, DecayBound{e, e}, cfg);
  const IntegralResult p = psi_detailed(eta, kappa, cfg);
  const double f = 1.0 + p.value + second.value + tail.value;
  return {f, Method::repr_small_kappa, p.error_estimate + second.error_estimate + tail.error_estimate, false};
}

/// Large-kappa representation
///   F = 1 + (1 - e^{-eta})/eta + Psi - eta d^2/deta^2 [ (1/eta) Integral_kappa^inf Psi(eta|k') dk' ].
/// The kappa' tail is mapped onto v in (0, 1] by kappa' = kappa / v^2, which
/// keeps the integrand finite at v -> 0 even at s = 1 where the exponential
/// factor no longer decays.
inline EnhancementValue repr_large_kappa(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  const double e = eta.value();
  if (!(e > 0.0)) throw DomainError("repr_large_kappa needs eta > 0");
  if (kappa.is_infinite()) return {f_gue(e), Method::repr_large_kappa, 0.0, false};
  if (kappa.is_zero()) throw DomainError("repr_large_kappa needs kappa > 0");
  const double k = kappa.value();

  auto integrand = [&](double s) {
    if (s == 0.0) return 0.0;
    const double weight = e * s * s * std::exp(-e * s);
    const double r = std::sqrt(s);
    const double c = s * (r - 1.0) * (r - 1.0);
    if (k * c > 745.0) return 0.0;
    const QuadratureConfig inner = detail::inner_config(cfg, weight);
    const double u0 = 2.0 * k * s * r;
    auto kernel = [&](double v) {
      const double v2 = v * v;
      const double expo = k * c / v2;
      if (expo > 745.0) return 0.0;
      return 2.0 * k / (v2 * v) * std::exp(-expo) * xi(u0 / v2);
    };
    return weight * integrate_finite(kernel, 0.0, 1.0, inner).value;
  };
  const auto pts = detail::psi_breakpoints(e);
  IntegralResult head = integrate_panels(integrand, pts, cfg);
  // s^2 J_tail(s, kappa) <= s^2 J(s, inf) = min(s, 1)
  const IntegralResult tail = integrate_semi_infinite(integrand, 4.0, DecayBound{e, e}, cfg);
  const IntegralResult p = psi_detailed(eta, kappa, cfg);
  const double f = f_gue(e) + p.value - head.value - tail.value;
  return {f, Method::repr_large_kappa, p.error_estimate + head.error_estimate + tail.error_estimate, false};
}

/// Truncated small-kappa expansion
///   2 - kappa/eta + (6 + eta) kappa^2/eta^3 - (60 + eta (20 + eta)) kappa^3/eta^5.
inline EnhancementValue series_small_kappa(Openness eta, Chaoticity kappa, int order) {
  if (order < 1 || order > 3) throw DomainError("series order must be 1, 2 or 3");
  const double e = eta.value();
  if (!(e > 0.0)) throw DomainError("series_small_kappa needs eta > 0");
  if (kappa.is_infinite()) throw DomainError("series_small_kappa needs a finite kappa");
  const double k = kappa.value();
  const double r = k / e;
  double f = 2.0 - r;
  if (order >= 2) f += (6.0 + e) * r * r / e;
  if (order >= 3) f -= (60.0 + e * (20.0 + e)) * r * r * r / (e * e);
  return {f, Method::series_small_kappa, 0.0, r > 0.5};
}

/// Large-kappa approximation from the s = 0 saddle:
///   1 + (1 - e^{-eta})/eta + eta/(eta + kappa) - eta/(eta + kappa)^2.
inline EnhancementValue approx_large_kappa(Openness eta, Chaoticity kappa) {
  const double e = eta.value();
  if (kappa.is_infinite()) return {f_gue(e), Method::approx_large_kappa, 0.0, false};
  const double k = kappa.value();
  if (k == 0.0 && e == 0.0) throw DomainError("approx_large_kappa is indeterminate at eta = kappa = 0");
  const double sum = e + k;
  const double f = f_gue(e) + e / sum - e / (sum * sum);
  return {f, Method::approx_large_kappa, 0.0, !(k >= 10.0 && k >= 10.0 * e)};
}

/// Maxima of the Psi exponent -kappa s (sqrt(s)-1)^2 - eta s.
struct SaddlePoints {
  double s0 = 0.0;
  // second maximum; exists while eta <= kappa / 8
  std::optional<double> s1;
  // where s1 merges with the minimum and disappears
  static constexpr double inflection = 9.0 / 16.0;
  // rough size of Xi at s1 ~ 1, i.e. 1 / (sqrt(2 pi) kappa^{3/2})
  double xi_at_s1 = 0.0;
};

inline SaddlePoints saddle_points(Openness eta, Chaoticity kappa) {
  if (kappa.is_infinite() || kappa.is_zero()) throw DomainError("saddle points need 0 < kappa < inf");
  const double r = eta.value() / kappa.value();
  SaddlePoints sp;
  if (r <= 0.125) sp.s1 = (5.0 - 4.0 * r + 3.0 * std::sqrt(1.0 - 8.0 * r)) / 8.0;
  sp.xi_at_s1 = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * std::pow(kappa.value(), 1.5));
  return sp;
}

struct SlopeOptions {
  int levels = 5;         // forward differences at h0, h0/2, ..., h0/2^(levels-1)
  double base_step = 0.1;
};

/// dF/deta at eta = 0+ by Richardson extrapolation of forward differences.
/// Returns exactly 0 for kappa = 0, where F is constant.
inline double slope_at_origin(Chaoticity kappa, const QuadratureConfig& cfg = {}, SlopeOptions opt = {}) {
  if (kappa.is_zero()) return 0.0;
  if (opt.levels < 2) throw DomainError("slope_at_origin needs at least two levels");
  double h0 = opt.base_step;
  if (!kappa.is_infinite()) h0 *= std::min(1.0, std::cbrt(kappa.value()));

  std::vector<std::vector<double>> table(opt.levels);
  for (int i = 0; i < opt.levels; ++i) {
    const double h = h0 / std::ldexp(1.0, i);
    const double f = enhancement_exact(Openness(h), kappa, cfg).f;
    table[i].push_back((f - 2.0) / h);
    for (int j = 1; j <= i; ++j) {
      const double factor = std::ldexp(1.0, j) - 1.0;
      table[i].push_back(table[i][j - 1] + (table[i][j - 1] - table[i - 1][j - 1]) / factor);
    }
  }
  return table.back().back();
}

}  // namespace elastic
