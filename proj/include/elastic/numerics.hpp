#pragma once

// Shared numerical kernel: the scaled modified Bessel function I1, the
// function Xi(u) = 2 exp(-u) I1(u) / u, and adaptive Gauss-Kronrod quadrature
// on finite and exponentially decaying semi-infinite ranges.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "elastic/errors.hpp"

namespace elastic {

struct QuadratureConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_subdivisions = 2000;
  // Semi-infinite integrals are cut where the certified tail drops below
  // abs_tol * tail_cutoff.
  double tail_cutoff = 1e-2;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
      throw DomainError("quadrature tolerances must be positive");
    if (max_subdivisions < 1) throw DomainError("max_subdivisions must be >= 1");
    if (!(tail_cutoff > 0.0) || tail_cutoff > 1.0) throw DomainError("tail_cutoff must lie in (0, 1]");
  }

  // Configuration for an integral nested inside another one.
  QuadratureConfig nested(double factor = 1e-2) const {
    QuadratureConfig c = *this;
    c.abs_tol *= factor;
    c.rel_tol *= factor;
    return c;
  }
};

struct IntegralResult {
  double value = 0.0;
  double error_estimate = 0.0;
  long evaluations = 0;
};

// |f(s)| <= scale * exp(-rate * s) for every s past the start of the range.
struct DecayBound {
  double scale;
  double rate;
};

/// exp(-x) I1(x) for x >= 0, without overflow for any finite x.
inline double bessel_i1_scaled(double x) {
  if (!std::isfinite(x) || x < 0.0)
    throw DomainError("bessel_i1_scaled needs a finite x >= 0");
  if (x == 0.0) return 0.0;
  if (x <= 20.0) {
    // all terms positive: no cancellation, sum stays below e^20
    const double q = 0.25 * x * x;
    double term = 0.5 * x;
    double sum = term;
    for (int k = 0; k < 200; ++k) {
      term *= q / ((k + 1.0) * (k + 2.0));
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return sum * std::exp(-x);
  }
  // Hankel expansion; the smallest term is ~exp(-2x), far below double eps here.
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = term * -(4.0 - odd * odd) / (8.0 * k * x);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * x);
}

/// Xi(u) = 2 exp(-u) I1(u) / u with Xi(0) = 1; decreases from 1 to 0.
inline double xi(double u) {
  if (!(u >= 0.0)) throw DomainError("xi needs u >= 0");
  if (u < 1e-4) return 1.0 - u * (1.0 - u * (5.0 / 8.0 - u * (7.0 / 24.0)));
  return 2.0 * bessel_i1_scaled(u) / u;
}

namespace detail {

// QUADPACK qk21 abscissae (descending) and weights.
inline constexpr std::array<double, 11> kXgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr std::array<double, 11> kWgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525452842, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
// Gauss weights for the nodes kXgk[1], kXgk[3], ..., kXgk[9].
inline constexpr std::array<double, 5> kWg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
  double a, b;
  double value, error, resabs;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gauss_kronrod21(F& f, double a, double b) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  std::array<double, 21> fv{};
  fv[10] = f(center);
  for (int j = 0; j < 10; ++j) {
    const double dx = half * kXgk[j];
    fv[j] = f(center - dx);
    fv[20 - j] = f(center + dx);
  }
  double resk = kWgk[10] * fv[10];
  double resg = 0.0;
  double resabs = kWgk[10] * std::abs(fv[10]);
  for (int j = 0; j < 10; ++j) {
    const double pair = fv[j] + fv[20 - j];
    resk += kWgk[j] * pair;
    resabs += kWgk[j] * (std::abs(fv[j]) + std::abs(fv[20 - j]));
    if (j % 2 == 1) resg += kWg[j / 2] * pair;
  }
  const double mean = 0.5 * resk;
  double resasc = kWgk[10] * std::abs(fv[10] - mean);
  for (int j = 0; j < 10; ++j) resasc += kWgk[j] * (std::abs(fv[j] - mean) + std::abs(fv[20 - j] - mean));

  const double width = std::abs(half);
  double err = std::abs((resk - resg) * half);
  resasc *= width;
  resabs *= width;
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
  return {a, b, resk * half, err, resabs};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod over consecutive panels [p0,p1], [p1,p2], ...
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate meets max(abs_tol, rel_tol*|value|), or until it stalls at the
/// roundoff floor. Throws ConvergenceError when max_subdivisions is exhausted.
template <class F>
IntegralResult integrate_panels(F&& f, std::span<const double> breakpoints, const QuadratureConfig& cfg = {}) {
  cfg.validate();
  if (breakpoints.size() < 2) throw DomainError("integrate_panels needs at least two breakpoints");
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (!std::isfinite(breakpoints[i]) || !std::isfinite(breakpoints[i + 1]) || breakpoints[i] > breakpoints[i + 1])
      throw DomainError("integration breakpoints must be finite and non-decreasing");
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();

  std::priority_queue<detail::Panel> active;
  std::vector<detail::Panel> settled;  // panels too narrow to split further
  IntegralResult out;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (breakpoints[i] == breakpoints[i + 1]) continue;
    active.push(detail::gauss_kronrod21(f, breakpoints[i], breakpoints[i + 1]));
    out.evaluations += 21;
  }

  auto totals = [&] {
    double value = 0.0, error = 0.0, resabs = 0.0;
    auto q = active;
    for (; !q.empty(); q.pop()) {
      value += q.top().value;
      error += q.top().error;
      resabs += q.top().resabs;
    }
    for (const auto& p : settled) {
      value += p.value;
      error += p.error;
      resabs += p.resabs;
    }
    return std::array<double, 3>{value, error, resabs};
  };

  auto [value, error, resabs] = totals();
  int subdivisions = 0;
  while (!active.empty()) {
    const double target = std::max({cfg.abs_tol, cfg.rel_tol * std::abs(value), 100.0 * eps * resabs});
    if (error <= target) break;
    if (subdivisions >= cfg.max_subdivisions)
      throw ConvergenceError("adaptive quadrature did not converge within " + std::to_string(cfg.max_subdivisions) +
                                 " subdivisions",
                             value, error);
    detail::Panel worst = active.top();
    active.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      settled.push_back(worst);
      continue;
    }
    const detail::Panel left = detail::gauss_kronrod21(f, worst.a, mid);
    const detail::Panel right = detail::gauss_kronrod21(f, mid, worst.b);
    out.evaluations += 42;
    ++subdivisions;
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    resabs += left.resabs + right.resabs - worst.resabs;
    active.push(left);
    active.push(right);
  }
  // resum to shed the drift of the running updates
  auto t = totals();
  out.value = t[0];
  out.error_estimate = t[1];
  const double target = std::max({cfg.abs_tol, cfg.rel_tol * std::abs(out.value), 100.0 * eps * t[2]});
  if (out.error_estimate > target)
    throw ConvergenceError("adaptive quadrature stalled above tolerance", out.value, out.error_estimate);
  return out;
}

/// Integral of f over [a, b].
template <class F>
IntegralResult integrate_finite(F&& f, double a, double b, const QuadratureConfig& cfg = {}) {
  if (!(a <= b)) throw DomainError("integrate_finite needs a <= b");
  const std::array<double, 2> pts{a, b};
  return integrate_panels(f, pts, cfg);
}

/// Truncation point past which a DecayBound tail is below abs_tol * tail_cutoff.
inline double tail_truncation_point(double start, DecayBound bound, const QuadratureConfig& cfg) {
  if (!(bound.rate > 0.0) || !std::isfinite(bound.rate))
    throw DomainError("semi-infinite integration needs a positive finite decay rate");
  if (!(bound.scale >= 0.0)) throw DomainError("decay bound scale must be >= 0");
  const double budget = cfg.abs_tol * cfg.tail_cutoff;
  // scale * exp(-rate L) / rate <= budget
  const double L = std::log(bound.scale / (bound.rate * budget)) / bound.rate;
  return std::max(start, L);
}

/// Integral of f over [start, infinity) for f bounded by a DecayBound.
///
/// The range is cut at the point where the bounded tail falls below
/// abs_tol * tail_cutoff; that tail bound is added to the error estimate.
/// `interior` may list extra breakpoints (kinks, peaks) inside the range.
template <class F>
IntegralResult integrate_semi_infinite(F&& f, double start, DecayBound bound, const QuadratureConfig& cfg = {},
                                       std::span<const double> interior = {}) {
  cfg.validate();
  const double stop = tail_truncation_point(start, bound, cfg);
  const double tail = bound.scale * std::exp(-bound.rate * stop) / bound.rate;

  std::vector<double> pts{start};
  for (double p : interior)
    if (p > start && p < stop) pts.push_back(p);
  std::sort(pts.begin(), pts.end());
  // panels of a few decay lengths so the decaying tail is sampled everywhere
  const double step = 4.0 / bound.rate;
  for (double p = pts.back() + step; p < stop; p += step) pts.push_back(p);
  if (pts.back() < stop) pts.push_back(stop);
  if (pts.size() < 2) return {};

  IntegralResult r = integrate_panels(f, pts, cfg);
  r.error_estimate += tail;
  return r;
}

/// Integral over [0, infinity) of f with |f(s)| <= exp(-alpha s).
template <class F>
IntegralResult integrate_semi_infinite(F&& f, double alpha, const QuadratureConfig& cfg = {}) {
  if (!(alpha > 0.0)) throw DomainError("semi-infinite integration needs alpha > 0");
  return integrate_semi_infinite(f, 0.0, DecayBound{1.0, alpha}, cfg);
}

}  // namespace elastic
