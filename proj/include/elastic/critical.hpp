#pragma once

// Critical openness eta_c(kappa) where F(eta|kappa) is minimal, and the inverse
// map from an observed minimum F_min to the chaoticity kappa.

#include <cmath>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "elastic/enhancement.hpp"
#include "elastic/formfactor.hpp"
#include "elastic/parallel.hpp"
#include "elastic/parameters.hpp"

namespace elastic {

struct CriticalPoint {
  double eta_c = 0.0;
  double f_min = 2.0;
  Chaoticity kappa = Chaoticity::regular();
  double df_at_eta_c = 0.0;
};

struct CriticalSearchOptions {
  double scan_ratio = 1.25;  // geometric step of the bracketing scan
  double derivative_tol = 1e-8;
  int max_refinements = 200;
};

/// dF/deta = -d/deta [eta Integral exp(-eta s) B2(s|kappa) ds].
inline double df_deta(Openness eta, Chaoticity kappa, const QuadratureConfig& cfg = {}) {
  if (kappa.is_zero()) throw DomainError("dF/deta is identically zero at kappa = 0: no critical point");
  return -laplace_b2_eta_derivative(eta, kappa, cfg);
}

/// Scan cap for the bracketing search.
inline double eta_scan_limit(double kappa) { return std::max(100.0, 50.0 * kappa); }

namespace detail {

// Illinois-modified regula falsi on a sign-changing bracket of dF/deta.
inline CriticalPoint refine_critical(Chaoticity kappa, double lo, double flo, double hi, double fhi,
                                     const QuadratureConfig& cfg, const CriticalSearchOptions& opt) {
  double best = std::abs(flo) < std::abs(fhi) ? lo : hi;
  double fbest = std::abs(flo) < std::abs(fhi) ? flo : fhi;
  int side = 0;
  for (int it = 0; it < opt.max_refinements && std::abs(fbest) >= opt.derivative_tol; ++it) {
    double mid = (lo * fhi - hi * flo) / (fhi - flo);
    if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    const double fm = df_deta(Openness(mid), kappa, cfg);
    if (std::abs(fm) < std::abs(fbest)) {
      best = mid;
      fbest = fm;
    }
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = mid;
      fhi = fm;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
    if (hi - lo <= 1e-14 * hi) break;
  }
  if (std::abs(fbest) >= opt.derivative_tol)
    throw ConvergenceError("critical openness refinement stalled", best, std::abs(fbest));
  const double f = enhancement_exact(Openness(best), kappa, cfg).f;
  return {best, f, kappa, fbest};
}

}  // namespace detail

/// First minimum of F(.|kappa) in eta.
///
/// Brackets a negative -> positive sign change of dF/deta with a geometric
/// scan up to max(100, 50 kappa), then refines it to |dF/deta| < tol.
/// `hint` is an optional bracket tried before the scan.
inline CriticalPoint eta_critical(Chaoticity kappa, const QuadratureConfig& cfg = {},
                                  const CriticalSearchOptions& opt = {},
                                  std::optional<std::pair<double, double>> hint = std::nullopt) {
  if (kappa.is_infinite())
    throw DomainError("no critical openness at kappa = inf: the GUE enhancement decreases monotonically");
  if (kappa.is_zero()) throw DomainError("no critical openness at kappa = 0: F is identically 2");
  const double k = kappa.value();

  if (hint && hint->first > 0.0 && hint->first < hint->second) {
    const double flo = df_deta(Openness(hint->first), kappa, cfg);
    const double fhi = df_deta(Openness(hint->second), kappa, cfg);
    if (flo < 0.0 && fhi > 0.0) return detail::refine_critical(kappa, hint->first, flo, hint->second, fhi, cfg, opt);
  }

  const double limit = eta_scan_limit(k);
  double lo = 1e-2 * std::min(1.0, std::cbrt(k));
  double flo = df_deta(Openness(lo), kappa, cfg);
  for (int tries = 0; flo >= 0.0 && tries < 3; ++tries) {
    lo *= 0.1;
    flo = df_deta(Openness(lo), kappa, cfg);
  }
  if (flo >= 0.0) {
    std::ostringstream msg;
    msg << "dF/deta is not negative near eta = 0 for kappa = " << k;
    throw NoCriticalPoint(msg.str());
  }
  while (lo < limit) {
    const double hi = std::min(lo * opt.scan_ratio, limit);
    const double fhi = df_deta(Openness(hi), kappa, cfg);
    if (fhi > 0.0) return detail::refine_critical(kappa, lo, flo, hi, fhi, cfg, opt);
    if (fhi == 0.0) return {hi, enhancement_exact(Openness(hi), kappa, cfg).f, kappa, 0.0};
    lo = hi;
    flo = fhi;
  }
  std::ostringstream msg;
  msg << "no sign change of dF/deta for eta up to " << limit << " at kappa = " << k;
  throw NoCriticalPoint(msg.str());
}

struct InversionOptions {
  double kappa_lo = 1e-3;
  double kappa_hi = 1e4;
  int points_per_decade = 4;
  double f_tol = 1e-6;
  unsigned threads = 1;
};

/// Inverts kappa -> F_min(kappa) = F(eta_c(kappa)|kappa).
///
/// The constructor tabulates F_min on a log grid over [kappa_lo, kappa_hi] and
/// checks it is non-increasing; invert() bisects in log kappa inside the grid
/// cell that brackets the observed value.
class FminInverter {
 public:
  explicit FminInverter(const QuadratureConfig& cfg = {}, InversionOptions opt = {}) : cfg_(cfg), opt_(opt) {
    if (!(opt_.kappa_lo > 0.0) || !(opt_.kappa_hi > opt_.kappa_lo) || opt_.points_per_decade < 1)
      throw DomainError("invalid kappa search range");
    const double decades = std::log10(opt_.kappa_hi / opt_.kappa_lo);
    const int n = std::max(2, static_cast<int>(std::ceil(decades * opt_.points_per_decade)) + 1);
    grid_.resize(n);
    parallel_for(n, opt_.threads, [&](std::size_t i) {
      const double k = opt_.kappa_lo * std::pow(opt_.kappa_hi / opt_.kappa_lo, double(i) / (n - 1));
      grid_[i] = eta_critical(Chaoticity::finite(k), cfg_);
    });
    for (int i = 0; i + 1 < n; ++i) {
      if (grid_[i + 1].f_min > grid_[i].f_min + opt_.f_tol) {
        std::ostringstream msg;
        msg << "F_min(kappa) is not monotone: F_min(" << grid_[i].kappa.value() << ") = " << grid_[i].f_min
            << " < F_min(" << grid_[i + 1].kappa.value() << ") = " << grid_[i + 1].f_min;
        throw SolverError(msg.str());
      }
    }
  }

  double floor() const { return grid_.back().f_min; }
  double ceiling() const { return grid_.front().f_min; }
  const std::vector<CriticalPoint>& grid() const { return grid_; }

  CriticalPoint invert(double f_min_observed) const {
    if (!std::isfinite(f_min_observed) || f_min_observed >= 2.0 || f_min_observed < floor() ||
        f_min_observed > ceiling()) {
      std::ostringstream msg;
      msg.precision(10);
      msg << "F_min = " << f_min_observed << " outside the attainable range [" << floor() << ", " << ceiling()
          << "] for kappa in [" << opt_.kappa_lo << ", " << opt_.kappa_hi << "]";
      throw DomainError(msg.str());
    }
    std::size_t i = 0;
    while (i + 2 < grid_.size() && grid_[i + 1].f_min > f_min_observed) ++i;
    const CriticalPoint& a = grid_[i];
    const CriticalPoint& b = grid_[i + 1];
    if (std::abs(a.f_min - f_min_observed) < opt_.f_tol) return a;
    if (std::abs(b.f_min - f_min_observed) < opt_.f_tol) return b;

    // eta_c grows with kappa, so the neighbours' critical points bracket it
    const std::pair<double, double> hint{std::min(a.eta_c, b.eta_c), std::max(a.eta_c, b.eta_c)};
    double lo = std::log(a.kappa.value());
    double hi = std::log(b.kappa.value());
    CriticalPoint best = a;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      best = eta_critical(Chaoticity::finite(std::exp(mid)), cfg_, {}, hint);
      const double gap = best.f_min - f_min_observed;
      if (std::abs(gap) < opt_.f_tol) return best;
      if (gap > 0.0)
        lo = mid;
      else
        hi = mid;
      if (hi - lo < 1e-15) break;
    }
    throw ConvergenceError("kappa bisection did not reach the F_min tolerance", best.kappa.value(),
                           std::abs(best.f_min - f_min_observed));
  }

 private:
  QuadratureConfig cfg_;
  InversionOptions opt_;
  std::vector<CriticalPoint> grid_;
};

/// kappa such that F(eta_c(kappa)|kappa) = f_min_observed.
inline Chaoticity kappa_from_fmin(double f_min_observed, const QuadratureConfig& cfg = {},
                                  InversionOptions opt = {}) {
  if (!(f_min_observed > 1.0 && f_min_observed < 2.0))
    throw DomainError("F_min must lie in (1, 2), got " + std::to_string(f_min_observed));
  return FminInverter(cfg, opt).invert(f_min_observed).kappa;
}

}  // namespace elastic
