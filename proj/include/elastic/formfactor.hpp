#pragma once

// Binary (two-level) form factor B2(s|kappa) across the Poisson -> GUE
// crossover for broken time-reversal symmetry, and its Laplace transforms.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "elastic/numerics.hpp"
#include "elastic/parameters.hpp"

namespace elastic {

/// GUE limit (1 - s) theta(1 - s).
inline double b2_gue(ScaledTime s) {
  const double v = s.value();
  return v < 1.0 ? 1.0 - v : 0.0;
}

namespace detail {

// Integrand of the crossover correction after y = cos(theta):
//   (2 sqrt(s) cos(theta) + 1) sin^2(theta) / D * exp(-kappa s D),
//   D = s + 2 sqrt(s) cos(theta) + 1 = (sqrt(s) - 1)^2 + 4 sqrt(s) cos^2(theta/2).
// Half-angle forms keep D and sin^2 accurate near theta = pi, where both vanish
// together at s = 1.
inline double b2_correction_integrand(double theta, double root_s, double s, double kappa) {
  const double ch = std::cos(0.5 * theta);
  const double sh = std::sin(0.5 * theta);
  const double c2 = ch * ch;
  const double s2 = sh * sh;
  const double gap = root_s - 1.0;
  const double d = gap * gap + 4.0 * root_s * c2;
  const double lead = 2.0 * root_s * (c2 - s2) + 1.0;
  const double ratio = d > 0.0 ? 4.0 * s2 * c2 / d : s2;  // removable point (s = 1, theta = pi)
  return lead * ratio * std::exp(-kappa * s * d);
}

}  // namespace detail

/// B2(s|kappa) with the quadrature error of the crossover term.
inline IntegralResult b2_transient_detailed(ScaledTime s, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  const double gue = b2_gue(s);
  if (kappa.is_infinite()) return {gue, 0.0, 0};
  const double sv = s.value();
  const double root_s = std::sqrt(sv);
  const double k = kappa.value();
  constexpr double pi = std::numbers::pi;
  const std::array<double, 4> pts{0.0, 0.5 * pi, 0.75 * pi, pi};
  IntegralResult r = integrate_panels(
      [&](double theta) { return detail::b2_correction_integrand(theta, root_s, sv, k); }, pts, cfg);
  r.value = gue - (2.0 / pi) * r.value;
  r.error_estimate *= 2.0 / pi;
  return r;
}

inline double b2_transient(ScaledTime s, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  return b2_transient_detailed(s, kappa, cfg).value;
}

namespace detail {

// Integral over s in [0, inf) of weight(s) * B2(s|kappa) for finite kappa > 0.
//
// Past s = 4, |B2(s|kappa)| <= 5 exp(-kappa s^2 / 4) <= 5 exp(-kappa s), since
// D >= (sqrt(s) - 1)^2 >= s/4 and |2 y sqrt(s) + 1| / D <= 5 there. The caller
// provides the matching bound on |weight| as weight_bound.
template <class Weight>
IntegralResult integrate_against_b2(double eta, double kappa, Weight weight, DecayBound weight_bound,
                                    const QuadratureConfig& cfg) {
  const QuadratureConfig inner = cfg.nested();
  const Chaoticity k = Chaoticity::finite(kappa);
  auto f = [&](double s) { return weight(s) * b2_transient(ScaledTime(s), k, inner); };

  std::vector<double> pts{0.0};
  for (double c : {1.0, 4.0, 16.0})
    if (c / eta < 1.0) pts.push_back(c / eta);
  pts.push_back(1.0);
  pts.push_back(4.0);
  IntegralResult head = integrate_panels(f, pts, cfg);

  const DecayBound tail_bound{5.0 * weight_bound.scale, weight_bound.rate + kappa};
  const IntegralResult tail = integrate_semi_infinite(f, 4.0, tail_bound, cfg);
  head.value += tail.value;
  head.error_estimate += tail.error_estimate;
  head.evaluations += tail.evaluations;
  return head;
}

}  // namespace detail

/// eta * Integral_0^inf exp(-eta s) B2(s|kappa) ds, in [0, 1].
inline IntegralResult laplace_b2_detailed(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  const double e = eta.value();
  if (e == 0.0 || kappa.is_zero()) return {};
  if (kappa.is_infinite())
    return integrate_finite([e](double s) { return e * std::exp(-e * s) * (1.0 - s); }, 0.0, 1.0, cfg);
  return detail::integrate_against_b2(
      e, kappa.value(), [e](double s) { return e * std::exp(-e * s); }, DecayBound{e, e}, cfg);
}

inline double laplace_b2(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  return laplace_b2_detailed(eta, kappa, cfg).value;
}

/// d/deta of laplace_b2: Integral_0^inf exp(-eta s) (1 - eta s) B2(s|kappa) ds.
inline IntegralResult laplace_b2_eta_derivative_detailed(Openness eta, Chaoticity kappa,
                                                         const QuadratureConfig& cfg = {}) {
  const double e = eta.value();
  if (!(e > 0.0)) throw DomainError("laplace_b2_eta_derivative needs eta > 0");
  if (kappa.is_zero()) return {};
  auto weight = [e](double s) { return std::exp(-e * s) * (1.0 - e * s); };
  if (kappa.is_infinite())
    return integrate_finite([&](double s) { return weight(s) * (1.0 - s); }, 0.0, 1.0, cfg);
  // |1 - t| exp(-t) <= (1 + t) exp(-t/2) exp(-t/2) <= 2 exp(-1/2) exp(-t/2)
  const double c = 2.0 * std::exp(-0.5);
  return detail::integrate_against_b2(e, kappa.value(), weight, DecayBound{c, 0.5 * e}, cfg);
}

inline double laplace_b2_eta_derivative(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  return laplace_b2_eta_derivative_detailed(eta, kappa, cfg).value;
}

}  // namespace elastic
