#pragma once

// Monte Carlo laboratory for the resonance S-matrix
//   S(E) = I - i A^dag (E - H + (i/2) A A^dag)^{-1} A
// with random internal Hamiltonians H (Poisson, GUE, or the crossover
// H0 + lambda V) and Gaussian channel couplings A. Used as an independent
// check of the analytic enhancement factor.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "elastic/errors.hpp"
#include "elastic/formfactor.hpp"
#include "elastic/parallel.hpp"
#include "elastic/parameters.hpp"

namespace elastic::rmt {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

enum class EnsembleKind { poisson_diagonal, gue, transition };

struct Ensemble {
  EnsembleKind kind = EnsembleKind::gue;
  double lambda = 0.0;  // crossover strength, transition only

  static Ensemble poisson_diagonal() { return {EnsembleKind::poisson_diagonal, 0.0}; }
  static Ensemble gue() { return {EnsembleKind::gue, 0.0}; }
  static Ensemble transition(double lambda) {
    if (!std::isfinite(lambda) || lambda < 0.0) throw DomainError("transition lambda must be >= 0");
    return {EnsembleKind::transition, lambda};
  }

  std::string name() const {
    switch (kind) {
      case EnsembleKind::poisson_diagonal: return "poisson";
      case EnsembleKind::gue: return "gue";
      case EnsembleKind::transition: return "transition";
    }
    return "unknown";
  }
};

/// Energy levels with their nominal mean spacing d.
struct Spectrum {
  std::vector<double> levels;  // ascending
  double mean_spacing = 1.0;

  static Spectrum from_levels(std::vector<double> levels, double mean_spacing) {
    if (!(mean_spacing > 0.0)) throw DomainError("mean spacing must be > 0");
    std::sort(levels.begin(), levels.end());
    return {std::move(levels), mean_spacing};
  }
  double density() const { return 1.0 / mean_spacing; }
  double heisenberg_time() const { return 2.0 * std::numbers::pi / mean_spacing; }
};

struct Hamiltonian {
  Matrix matrix;
  bool diagonal = false;
  double mean_spacing = 1.0;

  Spectrum spectrum() const {
    std::vector<double> lv(matrix.rows());
    if (diagonal) {
      for (Eigen::Index i = 0; i < matrix.rows(); ++i) lv[i] = matrix(i, i).real();
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(matrix, Eigen::EigenvaluesOnly);
      for (Eigen::Index i = 0; i < matrix.rows(); ++i) lv[i] = es.eigenvalues()(i);
    }
    return Spectrum::from_levels(std::move(lv), mean_spacing);
  }
};

using RngStream = std::mt19937_64;

/// Independent stream for realization `index`; depends only on the pair.
inline RngStream realization_stream(std::uint64_t master_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
  return RngStream(seq);
}

namespace detail {

inline double standard_normal(RngStream& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Hermitian matrix with E|H_ij|^2 = variance; semicircle radius 2 sqrt(n variance).
inline Matrix gue_matrix(int n, double variance, RngStream& rng) {
  Matrix h(n, n);
  const double sd = std::sqrt(variance);
  const double sd_half = std::sqrt(0.5 * variance);
  for (int i = 0; i < n; ++i) {
    h(i, i) = sd * standard_normal(rng);
    for (int j = i + 1; j < n; ++j) {
      const double re = standard_normal(rng);
      const double im = standard_normal(rng);
      h(i, j) = Complex(re * sd_half, im * sd_half);
      h(j, i) = std::conj(h(i, j));
    }
  }
  return h;
}

}  // namespace detail

/// Off-diagonal variance for which the GUE semicircle has central spacing d:
/// d = pi R / (2N), R = 2 sqrt(N v).
inline double gue_variance_for_spacing(int n, double d) { return n * d * d / (std::numbers::pi * std::numbers::pi); }

/// Draw an internal Hamiltonian.
///
/// poisson_diagonal: n iid levels uniform on [-n d/2, n d/2].
/// gue: semicircle with central spacing d.
/// transition: poisson_diagonal + lambda * gue, both with spacing d.
inline Hamiltonian sample_hamiltonian(Ensemble ensemble, int n, double d, RngStream& rng) {
  if (n < 2) throw DomainError("need at least 2 levels");
  if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("mean spacing must be > 0");
  Hamiltonian h;
  h.mean_spacing = d;
  auto poisson = [&] {
    Matrix m = Matrix::Zero(n, n);
    std::uniform_real_distribution<double> u(-0.5 * n * d, 0.5 * n * d);
    for (int i = 0; i < n; ++i) m(i, i) = u(rng);
    return m;
  };
  switch (ensemble.kind) {
    case EnsembleKind::poisson_diagonal:
      h.matrix = poisson();
      h.diagonal = true;
      break;
    case EnsembleKind::gue:
      h.matrix = detail::gue_matrix(n, gue_variance_for_spacing(n, d), rng);
      break;
    case EnsembleKind::transition:
      h.matrix = poisson();
      if (ensemble.lambda == 0.0) {
        h.diagonal = true;
      } else {
        h.matrix += ensemble.lambda * detail::gue_matrix(n, gue_variance_for_spacing(n, d), rng);
      }
      break;
  }
  return h;
}

/// n x m complex Gaussian couplings with <A_n^a A_m^b*> = (gamma/n) delta_nm delta_ab.
inline Matrix sample_couplings(int n, int m, double gamma, RngStream& rng) {
  if (n < 1 || m < 1) throw DomainError("coupling matrix needs n, m >= 1");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("coupling strength gamma must be > 0");
  const double sd = std::sqrt(0.5 * gamma / n);
  Matrix a(n, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i) {
      const double re = detail::standard_normal(rng);
      const double im = detail::standard_normal(rng);
      a(i, j) = Complex(sd * re, sd * im);
    }
  return a;
}

struct ScatteringModel {
  int n_levels = 200;
  int n_channels = 20;
  double gamma = 1.0;
  Ensemble ensemble = Ensemble::gue();
  double mean_spacing = 1.0;
  double energy = 0.0;

  // gamma chosen so that 2 pi (M/N) gamma / d = eta
  static ScatteringModel with_openness(Ensemble ensemble, int n, int m, double eta, double d = 1.0) {
    if (!(eta > 0.0)) throw DomainError("openness must be > 0");
    ScatteringModel model{n, m, eta * d * n / (2.0 * std::numbers::pi * m), ensemble, d, 0.0};
    model.validate();
    return model;
  }
  // gamma chosen so that pi gamma / (2 N d) = x
  static ScatteringModel with_overlap(Ensemble ensemble, int n, int m, double x, double d = 1.0) {
    if (!(x > 0.0)) throw DomainError("overlap parameter must be > 0");
    ScatteringModel model{n, m, 2.0 * n * d * x / std::numbers::pi, ensemble, d, 0.0};
    model.validate();
    return model;
  }

  double channel_ratio() const { return double(n_channels) / n_levels; }
  double overlap() const { return std::numbers::pi * gamma / (2.0 * n_levels * mean_spacing); }
  double transmission_weak() const { return 4.0 * overlap(); }
  double openness() const { return 2.0 * std::numbers::pi * channel_ratio() * gamma / mean_spacing; }

  void validate() const {
    if (n_levels < 2) throw DomainError("need N >= 2 levels");
    if (n_channels < 1 || n_channels > n_levels) throw DomainError("need 1 <= M <= N channels");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be > 0");
    if (!(mean_spacing > 0.0) || !std::isfinite(mean_spacing)) throw DomainError("mean spacing must be > 0");
    if (!std::isfinite(energy)) throw DomainError("energy must be finite");
    if (!(overlap() < 0.1))
      throw DomainError("weak-coupling regime requires x = pi gamma / (2 N d) < 0.1, got " +
                        std::to_string(overlap()));
  }
};

struct Scattering {
  Matrix s;  // M x M scattering matrix
  Matrix x;  // N x M solution of (E - H + (i/2) A A^dag) X = A
};

/// Solve for S(E) with one LU factorisation shared by all M channels.
inline Scattering solve_scattering(const Matrix& h, const Matrix& a, double energy) {
  if (h.rows() != h.cols() || a.rows() != h.rows()) throw DomainError("H must be N x N and A must be N x M");
  const Eigen::Index n = h.rows();
  const Eigen::Index m = a.cols();
  const Complex half_i(0.0, 0.5);
  Matrix k = -h;
  k.diagonal().array() += energy;
  k.noalias() += half_i * (a * a.adjoint());
  Eigen::PartialPivLU<Matrix> lu(k);
  Scattering out;
  out.x = lu.solve(a);
  if (!out.x.allFinite()) throw SolverError("singular resonance system (pole on the real axis)");
  out.s = Matrix::Identity(m, m);
  out.s.noalias() -= Complex(0.0, 1.0) * (a.adjoint() * out.x);
  (void)n;
  return out;
}

inline Matrix smatrix(const Matrix& h, const Matrix& a, double energy) { return solve_scattering(h, a, energy).s; }

/// Operator norm of S^dag S - I.
inline double unitarity_deficiency(const Matrix& s) {
  Matrix d = s.adjoint() * s;
  d.diagonal().array() -= 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(d, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Channel-averaged Wigner time Q = -(2/M) Im Tr (E - H_eff)^{-1}.
/// Uses -2 Im Tr G = Tr(G A A^dag G^dag) = ||G A||_F^2 with G A = X.
inline double delay_time(const Scattering& sc) {
  return sc.x.squaredNorm() / static_cast<double>(sc.s.rows());
}

struct MCEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n_realizations = 0;
  std::uint64_t master_seed = 0;
};

// Per-realization sums over channels of S(E).
struct RealizationRecord {
  std::uint64_t index = 0;
  Complex diag_sum;            // sum_a S^aa
  double diag_abs2_sum = 0.0;  // sum_a |S^aa|^2
  Complex offdiag_sum;         // sum_{a != b} S^ab
  double offdiag_abs2_sum = 0.0;
  double delay_time = 0.0;
  double unitarity_deficiency = 0.0;
};

inline RealizationRecord simulate_realization(const ScatteringModel& model, std::uint64_t master_seed,
                                              std::uint64_t index) {
  RngStream rng = realization_stream(master_seed, index);
  const Hamiltonian h = sample_hamiltonian(model.ensemble, model.n_levels, model.mean_spacing, rng);
  const Matrix a = sample_couplings(model.n_levels, model.n_channels, model.gamma, rng);
  const Scattering sc = solve_scattering(h.matrix, a, model.energy);
  RealizationRecord r;
  r.index = index;
  const int m = model.n_channels;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const Complex v = sc.s(i, j);
      if (i == j) {
        r.diag_sum += v;
        r.diag_abs2_sum += std::norm(v);
      } else {
        r.offdiag_sum += v;
        r.offdiag_abs2_sum += std::norm(v);
      }
    }
  }
  r.delay_time = delay_time(sc);
  r.unitarity_deficiency = unitarity_deficiency(sc.s);
  return r;
}

namespace detail {

struct Totals {
  double count = 0.0;
  Complex diag;
  double diag_abs2 = 0.0;
  Complex offdiag;
  double offdiag_abs2 = 0.0;
  double q = 0.0;
  double q2 = 0.0;

  void add(const RealizationRecord& r, double sign = 1.0) {
    count += sign;
    diag += sign * r.diag_sum;
    diag_abs2 += sign * r.diag_abs2_sum;
    offdiag += sign * r.offdiag_sum;
    offdiag_abs2 += sign * r.offdiag_abs2_sum;
    q += sign * r.delay_time;
    q2 += sign * r.delay_time * r.delay_time;
  }
};

// Full-sample statistic with its leave-one-out jackknife standard error.
template <class Stat>
MCEstimate jackknife(const std::vector<RealizationRecord>& records, const Totals& all, Stat stat,
                     std::uint64_t seed) {
  MCEstimate est;
  est.value = stat(all);
  est.n_realizations = static_cast<long>(records.size());
  est.master_seed = seed;
  const double n = static_cast<double>(records.size());
  if (records.size() < 2) return est;
  std::vector<double> loo(records.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Totals t = all;
    t.add(records[i], -1.0);
    loo[i] = stat(t);
    mean += loo[i];
  }
  mean /= n;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  est.std_error = std::sqrt((n - 1.0) / n * ss);
  return est;
}

}  // namespace detail

struct SimulationSummary {
  ScatteringModel model;
  MCEstimate enhancement;      // elastic / inelastic connected variance
  MCEstimate mean_s_real;      // channel-averaged <S^aa>
  MCEstimate mean_s_imag;
  MCEstimate offdiag_mean_real;  // <S^ab>, a != b
  MCEstimate offdiag_mean_imag;
  MCEstimate transmission;     // 1 - |<S^aa>|^2
  MCEstimate mean_delay;
  MCEstimate var_delay_normalized;    // <Q^2>/<Q>^2 - 1
  // 1 + (eta/2) var - 1/(M - 1). For isolated resonances the self-correlation
  // of each Lorentzian gives var = (2/eta) [M/(M-1) - eta int e^{-eta s} B2],
  // so the factor 1/2 and the Porter-Thomas width term 1/(M-1) are needed to
  // recover F; the latter vanishes as M -> infinity.
  MCEstimate enhancement_from_delay;
  double max_unitarity_deficiency = 0.0;
  std::vector<RealizationRecord> records;
};

/// All Monte Carlo estimates from one pass over n_realizations samples.
/// Realization i uses realization_stream(master_seed, i) and records are
/// reduced in index order, so results do not depend on `threads`.
inline SimulationSummary run_simulation(const ScatteringModel& model, long n_realizations, std::uint64_t master_seed,
                                        unsigned threads = 1) {
  model.validate();
  if (n_realizations < 2) throw DomainError("need at least 2 realizations");
  SimulationSummary out;
  out.model = model;
  out.records.resize(n_realizations);
  parallel_for(static_cast<std::size_t>(n_realizations), threads,
               [&](std::size_t i) { out.records[i] = simulate_realization(model, master_seed, i); });

  detail::Totals all;
  for (const auto& r : out.records) {
    all.add(r);
    out.max_unitarity_deficiency = std::max(out.max_unitarity_deficiency, r.unitarity_deficiency);
  }
  const double m = model.n_channels;
  const double eta = model.openness();
  auto mean_diag = [m](const detail::Totals& t) { return t.diag / (t.count * m); };
  auto stat = [&](auto fn) { return detail::jackknife(out.records, all, fn, master_seed); };

  out.mean_s_real = stat([&](const detail::Totals& t) { return mean_diag(t).real(); });
  out.mean_s_imag = stat([&](const detail::Totals& t) { return mean_diag(t).imag(); });
  out.transmission = stat([&](const detail::Totals& t) { return 1.0 - std::norm(mean_diag(t)); });
  out.mean_delay = stat([](const detail::Totals& t) { return t.q / t.count; });
  auto var_q = [](const detail::Totals& t) {
    const double mq = t.q / t.count;
    return (t.q2 / t.count) / (mq * mq) - 1.0;
  };
  out.var_delay_normalized = stat(var_q);
  if (model.n_channels >= 2) {
    out.enhancement_from_delay =
        stat([&](const detail::Totals& t) { return 1.0 + 0.5 * eta * var_q(t) - 1.0 / (m - 1.0); });
    const double pairs = m * (m - 1.0);
    out.offdiag_mean_real = stat([&](const detail::Totals& t) { return (t.offdiag / (t.count * pairs)).real(); });
    out.offdiag_mean_imag = stat([&](const detail::Totals& t) { return (t.offdiag / (t.count * pairs)).imag(); });
    out.enhancement = stat([&](const detail::Totals& t) {
      const double elastic = t.diag_abs2 / (t.count * m) - std::norm(mean_diag(t));
      const double inelastic = t.offdiag_abs2 / (t.count * pairs);
      return elastic / inelastic;
    });
  }
  return out;
}

struct MeanSAndTransmission {
  MCEstimate mean_s;  // real part of the channel-averaged <S^aa>
  MCEstimate mean_s_imag;
  MCEstimate offdiag_mean_real;
  MCEstimate offdiag_mean_imag;
  MCEstimate transmission;
};

inline MeanSAndTransmission mean_s_and_transmission(const ScatteringModel& model, long n_realizations,
                                                    std::uint64_t master_seed, unsigned threads = 1) {
  const SimulationSummary s = run_simulation(model, n_realizations, master_seed, threads);
  return {s.mean_s_real, s.mean_s_imag, s.offdiag_mean_real, s.offdiag_mean_imag, s.transmission};
}

/// F = C^aaaa(0) / C^abab(0) from connected S-matrix correlators.
inline MCEstimate estimate_enhancement_mc(const ScatteringModel& model, long n_realizations,
                                          std::uint64_t master_seed, unsigned threads = 1) {
  if (model.n_channels < 2) throw DomainError("the enhancement estimate needs at least 2 channels");
  return run_simulation(model, n_realizations, master_seed, threads).enhancement;
}

struct DelayTimeStats {
  MCEstimate mean_q;
  MCEstimate var_q_normalized;
  MCEstimate f_from_var_q;
};

inline DelayTimeStats delay_time_stats(const ScatteringModel& model, long n_realizations, std::uint64_t master_seed,
                                       unsigned threads = 1) {
  const SimulationSummary s = run_simulation(model, n_realizations, master_seed, threads);
  return {s.mean_delay, s.var_delay_normalized, s.enhancement_from_delay};
}

struct GSolution {
  Complex g;
  double residual = 0.0;
  int iterations = 0;
};

struct GSolveOptions {
  double tol = 1e-12;
  int max_iterations = 10000;
};

/// Right-hand side of the self-consistency equation
///   g = (1/N) sum_n [E - E_n + (i/2) m gamma / (1 + (i/2) gamma g)]^{-1}.
inline Complex g_equation_rhs(const Spectrum& spectrum, double gamma, double m, double energy, Complex g) {
  const Complex half_i(0.0, 0.5);
  const Complex shift = half_i * m * gamma / (1.0 + half_i * gamma * g);
  Complex sum = 0.0;
  for (double e_n : spectrum.levels) sum += 1.0 / (energy - e_n + shift);
  return sum / static_cast<double>(spectrum.levels.size());
}

/// Fixed-point solution of the g(E) equation, seeded with the weak-coupling
/// form (1/N) Tr G(E + (i/2) m gamma). Retries once with damping 0.5.
inline GSolution solve_g(const Spectrum& spectrum, double gamma, double m, double energy, GSolveOptions opt = {}) {
  if (spectrum.levels.empty()) throw DomainError("solve_g needs a non-empty spectrum");
  if (!(gamma >= 0.0) || !(m >= 0.0)) throw DomainError("solve_g needs gamma, m >= 0");
  const Complex half_i(0.0, 0.5);
  Complex seed = 0.0;
  for (double e_n : spectrum.levels) seed += 1.0 / (energy - e_n + half_i * m * gamma);
  seed /= static_cast<double>(spectrum.levels.size());

  GSolution best{seed, std::abs(seed - g_equation_rhs(spectrum, gamma, m, energy, seed)), 0};
  for (double damping : {1.0, 0.5}) {
    Complex g = seed;
    for (int it = 1; it <= opt.max_iterations; ++it) {
      const Complex next = g_equation_rhs(spectrum, gamma, m, energy, g);
      g = (1.0 - damping) * g + damping * next;
      const double res = std::abs(g - g_equation_rhs(spectrum, gamma, m, energy, g));
      if (res < best.residual) best = {g, res, it};
      if (res < opt.tol) return {g, res, it};
      if (!std::isfinite(res)) break;
    }
  }
  throw ConvergenceError("g(E) fixed-point iteration did not converge", best.g.real(), best.residual);
}

/// <S^aa> = (1 - (i gamma/2) g) / (1 + (i gamma/2) g).
inline Complex mean_s_from_g(Complex g, double gamma) {
  const Complex z = Complex(0.0, 0.5 * gamma) * g;
  return (1.0 - z) / (1.0 + z);
}

/// Spectrum of one sampled Hamiltonian.
inline Spectrum sample_spectrum(Ensemble ensemble, int n, double d, RngStream& rng) {
  return sample_hamiltonian(ensemble, n, d, rng).spectrum();
}

struct CalibrationOptions {
  double s_min = 0.05;
  double s_max = 1.5;
  int s_points = 30;
  double kappa_lo = 1e-3;
  double kappa_hi = 1e3;
  double max_reduced_chi2 = 3.0;
  unsigned threads = 1;
};

struct CalibrationResult {
  Chaoticity kappa = Chaoticity::regular();
  double reduced_chi2 = 0.0;
  bool at_lower_bound = false;
  bool at_upper_bound = false;
  std::vector<double> s;
  std::vector<double> form_factor;  // empirical 1 - B2(s)
  std::vector<double> std_error;
};

/// Empirical two-level form factor of the transition ensemble, fitted by the
/// B2(s|kappa) family.
///
/// Levels are unfolded with the staircase pooled over all realizations and
/// only the central half x in [N/4, 3N/4] enters, with a Hann taper. The
/// connected form factor K(s) = Var(sum w e^{2 pi i s x}) / <sum w^2> is
/// compared with 1 - B2(s|kappa). If moving kappa to a fit bound costs less
/// than one unit of chi^2 the bound itself is returned.
inline CalibrationResult calibrate_kappa(double lambda, int n, double d, long n_realizations,
                                         std::uint64_t master_seed, const CalibrationOptions& opt = {}) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("calibration needs lambda > 0");
  if (n < 8) throw DomainError("calibration needs N >= 8 levels");
  if (n_realizations < 10) throw DomainError("calibration needs at least 10 realizations");
  if (!(opt.s_min > 0.0 && opt.s_max > opt.s_min && opt.s_points >= 3))
    throw DomainError("invalid form-factor window");
  if (!(opt.kappa_lo > 0.0 && opt.kappa_hi > opt.kappa_lo)) throw DomainError("invalid kappa fit bounds");

  const Ensemble ens = Ensemble::transition(lambda);
  std::vector<std::vector<double>> spectra(n_realizations);
  parallel_for(static_cast<std::size_t>(n_realizations), opt.threads, [&](std::size_t i) {
    RngStream rng = realization_stream(master_seed, i);
    spectra[i] = sample_spectrum(ens, n, d, rng).levels;
  });

  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(n) * n_realizations);
  for (const auto& sp : spectra) pooled.insert(pooled.end(), sp.begin(), sp.end());
  std::sort(pooled.begin(), pooled.end());
  const double scale = static_cast<double>(n) / static_cast<double>(pooled.size());

  CalibrationResult out;
  out.s.resize(opt.s_points);
  for (int k = 0; k < opt.s_points; ++k)
    out.s[k] = opt.s_min + (opt.s_max - opt.s_min) * k / (opt.s_points - 1);

  const double x_lo = 0.25 * n;
  const double width = 0.5 * n;
  const std::size_t ns = out.s.size();
  std::vector<std::vector<Complex>> z(n_realizations, std::vector<Complex>(ns));
  std::vector<double> w2(n_realizations, 0.0);
  parallel_for(static_cast<std::size_t>(n_realizations), opt.threads, [&](std::size_t r) {
    for (double e : spectra[r]) {
      const auto lo = std::lower_bound(pooled.begin(), pooled.end(), e);
      const auto hi = std::upper_bound(lo, pooled.end(), e);
      const double x = scale * (0.5 * static_cast<double>((lo - pooled.begin()) + (hi - pooled.begin())));
      if (x < x_lo || x > x_lo + width) continue;
      const double sw = std::sin(std::numbers::pi * (x - x_lo) / width);
      const double w = sw * sw;
      w2[r] += w * w;
      for (std::size_t k = 0; k < ns; ++k) z[r][k] += w * std::polar(1.0, 2.0 * std::numbers::pi * out.s[k] * x);
    }
  });

  const double rr = static_cast<double>(n_realizations);
  double w2_mean = 0.0;
  for (double v : w2) w2_mean += v;
  w2_mean /= rr;
  out.form_factor.resize(ns);
  out.std_error.resize(ns);
  for (std::size_t k = 0; k < ns; ++k) {
    Complex zbar = 0.0;
    for (long r = 0; r < n_realizations; ++r) zbar += z[r][k];
    zbar /= rr;
    double sum = 0.0, sum2 = 0.0;
    for (long r = 0; r < n_realizations; ++r) {
      const double y = std::norm(z[r][k] - zbar) / w2_mean;
      sum += y;
      sum2 += y * y;
    }
    const double mean = sum / rr;
    out.form_factor[k] = sum / (rr - 1.0);
    out.std_error[k] = std::sqrt(std::max(sum2 / rr - mean * mean, 0.0) / (rr - 1.0));
    if (!(out.std_error[k] > 0.0)) throw CalibrationError("degenerate form-factor estimate", 0.0);
  }

  QuadratureConfig qcfg;
  qcfg.abs_tol = 1e-8;
  qcfg.rel_tol = 1e-8;
  auto chi2 = [&](double log_kappa) {
    const Chaoticity kappa = Chaoticity::finite(std::exp(log_kappa));
    double acc = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      const double model = 1.0 - b2_transient(ScaledTime(out.s[k]), kappa, qcfg);
      const double r = (out.form_factor[k] - model) / out.std_error[k];
      acc += r * r;
    }
    return acc;
  };

  const double u_lo = std::log(opt.kappa_lo);
  const double u_hi = std::log(opt.kappa_hi);
  auto [u_best, chi2_best] = boost::math::tools::brent_find_minima(chi2, u_lo, u_hi, 30);
  const double chi2_lo = chi2(u_lo);
  const double chi2_hi = chi2(u_hi);
  if (chi2_lo - chi2_best < 1.0 && chi2_lo <= chi2_hi) {
    u_best = u_lo;
    chi2_best = std::min(chi2_best, chi2_lo);
    out.at_lower_bound = true;
  } else if (chi2_hi - chi2_best < 1.0) {
    u_best = u_hi;
    chi2_best = std::min(chi2_best, chi2_hi);
    out.at_upper_bound = true;
  }
  out.kappa = Chaoticity::finite(out.at_lower_bound   ? opt.kappa_lo
                                 : out.at_upper_bound ? opt.kappa_hi
                                                      : std::exp(u_best));
  out.reduced_chi2 = chi2_best / static_cast<double>(ns - 1);
  if (out.reduced_chi2 > opt.max_reduced_chi2)
    throw CalibrationError("form-factor fit residual too large: reduced chi2 = " + std::to_string(out.reduced_chi2),
                           out.reduced_chi2);
  return out;
}

}  // namespace elastic::rmt
