#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "elastic/enhancement.hpp"
#include "elastic/rmtsim.hpp"

using namespace elastic;
using namespace elastic::rmt;

namespace {

constexpr double pi = std::numbers::pi;

// Asymptotic Kolmogorov distribution tail P(D_n > d) with the Stephens
// small-sample correction.
double ks_p_value(double d, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

double ks_statistic_exponential(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = 1.0 - std::exp(-x[i]);
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  return d;
}

std::vector<double> central_spacings(const Spectrum& sp) {
  const std::size_t n = sp.levels.size();
  std::vector<double> out;
  for (std::size_t i = n / 4; i + 1 < 3 * n / 4; ++i) out.push_back(sp.levels[i + 1] - sp.levels[i]);
  return out;
}

// Single channel, diagonal H: S = (1 - iK/2)/(1 + iK/2) with
// K(E) = sum_n |A_n|^2 / (E - E_n).
Complex two_level_s(double e, double e1, double e2, Complex a1, Complex a2) {
  const double k = std::norm(a1) / (e - e1) + std::norm(a2) / (e - e2);
  const Complex half_ik(0.0, 0.5 * k);
  return (1.0 - half_ik) / (1.0 + half_ik);
}

}  // namespace

TEST(Spectrum, InvariantsAndErrors) {
  const Spectrum sp = Spectrum::from_levels({3.0, -1.0, 2.0}, 0.5);
  EXPECT_TRUE(std::is_sorted(sp.levels.begin(), sp.levels.end()));
  EXPECT_EQ(sp.density(), 2.0);
  EXPECT_EQ(sp.heisenberg_time(), 2.0 * pi / 0.5);
  EXPECT_THROW(Spectrum::from_levels({1.0}, 0.0), DomainError);
}

TEST(RealizationStream, DeterministicAndDistinct) {
  auto a = realization_stream(42, 7);
  auto b = realization_stream(42, 7);
  auto c = realization_stream(42, 8);
  auto d = realization_stream(43, 7);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
  EXPECT_NE(va, d());
}

TEST(SampleHamiltonian, PoissonSpacingsAreExponential) {
  auto rng = realization_stream(2024, 0);
  const Hamiltonian h = sample_hamiltonian(Ensemble::poisson_diagonal(), 1000, 1.0, rng);
  EXPECT_TRUE(h.diagonal);
  const Spectrum sp = h.spectrum();
  EXPECT_GE(sp.levels.front(), -500.0);
  EXPECT_LE(sp.levels.back(), 500.0);
  const std::vector<double> s = central_spacings(sp);
  const double p = ks_p_value(ks_statistic_exponential(s), s.size());
  EXPECT_GT(p, 0.01);
}

TEST(SampleHamiltonian, KsTestRejectsGueSpacings) {
  auto rng = realization_stream(2024, 0);
  const Spectrum sp = sample_hamiltonian(Ensemble::gue(), 1000, 1.0, rng).spectrum();
  const std::vector<double> s = central_spacings(sp);
  EXPECT_LT(ks_p_value(ks_statistic_exponential(s), s.size()), 1e-6);
}

TEST(SampleHamiltonian, GueCentralSpacingIsCalibrated) {
  double span = 0.0;
  double count = 0.0;
  for (std::uint64_t r = 0; r < 4; ++r) {
    auto rng = realization_stream(99, r);
    const Hamiltonian h = sample_hamiltonian(Ensemble::gue(), 1000, 1.0, rng);
    EXPECT_FALSE(h.diagonal);
    EXPECT_TRUE(h.matrix.isApprox(h.matrix.adjoint(), 0.0));
    const Spectrum sp = h.spectrum();
    // central 10% of the levels
    const std::size_t lo = 450;
    const std::size_t hi = 550;
    span += sp.levels[hi] - sp.levels[lo];
    count += static_cast<double>(hi - lo);
  }
  EXPECT_NEAR(span / count, 1.0, 0.02);
}

TEST(SampleHamiltonian, TransitionAtZeroLambdaIsPoisson) {
  auto r1 = realization_stream(5, 3);
  auto r2 = realization_stream(5, 3);
  const Hamiltonian a = sample_hamiltonian(Ensemble::transition(0.0), 50, 1.0, r1);
  const Hamiltonian b = sample_hamiltonian(Ensemble::poisson_diagonal(), 50, 1.0, r2);
  EXPECT_TRUE(a.diagonal);
  EXPECT_EQ(a.matrix, b.matrix);
}

TEST(SampleHamiltonian, TransitionAddsScaledGue) {
  auto r1 = realization_stream(5, 3);
  const Hamiltonian a = sample_hamiltonian(Ensemble::transition(0.5), 50, 1.0, r1);
  EXPECT_FALSE(a.diagonal);
  EXPECT_TRUE(a.matrix.isApprox(a.matrix.adjoint(), 0.0));
  EXPECT_THROW(Ensemble::transition(-1.0), DomainError);
}

TEST(SampleHamiltonian, Errors) {
  auto rng = realization_stream(1, 1);
  EXPECT_THROW(sample_hamiltonian(Ensemble::gue(), 1, 1.0, rng), DomainError);
  EXPECT_THROW(sample_hamiltonian(Ensemble::gue(), 10, 0.0, rng), DomainError);
}

TEST(SampleCouplings, Moments) {
  auto rng = realization_stream(77, 0);
  const int n = 100;
  const int m = 1000;
  const double gamma = 2.5;
  const Matrix a = sample_couplings(n, m, gamma, rng);
  const double count = static_cast<double>(n) * m;

  const double mean_abs2 = a.cwiseAbs2().sum() / count;
  const double sd_abs2 = std::sqrt((a.cwiseAbs2().array() - mean_abs2).square().sum() / (count - 1.0));
  EXPECT_NEAR(mean_abs2, gamma / n, 3.0 * sd_abs2 / std::sqrt(count));

  const double re2 = a.real().array().square().sum() / count;
  const double im2 = a.imag().array().square().sum() / count;
  EXPECT_NEAR(re2, gamma / (2.0 * n), 3.0 * std::sqrt(2.0) * gamma / (2.0 * n) / std::sqrt(count));
  EXPECT_NEAR(im2, gamma / (2.0 * n), 3.0 * std::sqrt(2.0) * gamma / (2.0 * n) / std::sqrt(count));

  // <A_n^a A_m^b*> for distinct index pairs: neighbours in n and in a
  Complex cross = 0.0;
  double pairs = 0.0;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i + 1 < n; i += 2) {
      cross += a(i, j) * std::conj(a(i + 1, j));
      pairs += 1.0;
    }
  cross /= pairs;
  // each product has <|.|^2> = (gamma/n)^2, split evenly between re and im
  const double se = gamma / n / std::sqrt(2.0 * pairs);
  EXPECT_LT(std::abs(cross.real()), 3.0 * se);
  EXPECT_LT(std::abs(cross.imag()), 3.0 * se);

  EXPECT_THROW(sample_couplings(n, m, 0.0, rng), DomainError);
  EXPECT_THROW(sample_couplings(0, m, 1.0, rng), DomainError);
}

TEST(SMatrix, DecoupledIsIdentity) {
  auto rng = realization_stream(3, 0);
  const Hamiltonian h = sample_hamiltonian(Ensemble::gue(), 20, 1.0, rng);
  const Matrix s = smatrix(h.matrix, Matrix::Zero(20, 4), 0.0);
  EXPECT_TRUE(s.isApprox(Matrix::Identity(4, 4), 0.0));
}

TEST(SMatrix, UnitaryForSampledSystems) {
  for (auto ens : {Ensemble::gue(), Ensemble::poisson_diagonal(), Ensemble::transition(0.1)})
    for (std::uint64_t r = 0; r < 20; ++r) {
      auto rng = realization_stream(11, r);
      const Hamiltonian h = sample_hamiltonian(ens, 80, 1.0, rng);
      const Matrix a = sample_couplings(80, 8, 3.0, rng);
      EXPECT_LT(unitarity_deficiency(smatrix(h.matrix, a, 0.0)), 1e-10);
      EXPECT_LT(unitarity_deficiency(smatrix(h.matrix, a, 1.7)), 1e-10);
    }
}

TEST(SMatrix, TwoLevelSingleChannelClosedForm) {
  const double e1 = -0.4;
  const double e2 = 0.9;
  const Complex a1(0.3, -0.1);
  const Complex a2(-0.2, 0.25);
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = e1;
  h(1, 1) = e2;
  Matrix a(2, 1);
  a << a1, a2;
  for (double e : {-1.0, -0.41, 0.0, 0.3, 0.95, 2.0}) {
    const Complex s = smatrix(h, a, e)(0, 0);
    const Complex oracle = two_level_s(e, e1, e2, a1, a2);
    EXPECT_NEAR(std::abs(s - oracle), 0.0, 1e-12) << e;
  }
}

TEST(SMatrix, DimensionErrors) {
  EXPECT_THROW(smatrix(Matrix::Zero(3, 3), Matrix::Zero(2, 1), 0.0), DomainError);
  EXPECT_THROW(smatrix(Matrix::Zero(3, 2), Matrix::Zero(3, 1), 0.0), DomainError);
}

TEST(SMatrix, ChannelRelabelingPermutesS) {
  auto rng = realization_stream(21, 0);
  const Hamiltonian h = sample_hamiltonian(Ensemble::gue(), 40, 1.0, rng);
  const Matrix a = sample_couplings(40, 5, 2.0, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
  p.indices() << 3, 0, 4, 1, 2;
  const Matrix ap = a * p;
  const Matrix s = smatrix(h.matrix, a, 0.0);
  const Matrix sp = smatrix(h.matrix, ap, 0.0);
  EXPECT_TRUE(sp.isApprox(p.transpose() * s * p, 1e-12));
}

TEST(DelayTime, ResolventTraceIdentity) {
  auto rng = realization_stream(8, 0);
  const Hamiltonian h = sample_hamiltonian(Ensemble::gue(), 60, 1.0, rng);
  const Matrix a = sample_couplings(60, 6, 4.0, rng);
  const Scattering sc = solve_scattering(h.matrix, a, 0.2);
  Matrix k = -h.matrix;
  k.diagonal().array() += 0.2;
  k += Complex(0.0, 0.5) * a * a.adjoint();
  const Complex tr = k.inverse().trace();
  EXPECT_NEAR(delay_time(sc), -2.0 / 6.0 * tr.imag(), 1e-10 * std::abs(tr.imag()));
}

TEST(DelayTime, WignerTimeOfTwoLevelSystem) {
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = -0.3;
  h(1, 1) = 0.5;
  Matrix a(2, 1);
  a << Complex(0.4, 0.1), Complex(-0.3, 0.2);
  for (double e : {-0.5, 0.0, 0.2, 0.6}) {
    const double step = 1e-5;
    const Complex sp = two_level_s(e + step, -0.3, 0.5, a(0, 0), a(1, 0));
    const Complex sm = two_level_s(e - step, -0.3, 0.5, a(0, 0), a(1, 0));
    const Complex s0 = two_level_s(e, -0.3, 0.5, a(0, 0), a(1, 0));
    // Wigner time -i S* dS/dE
    const double wigner = (Complex(0.0, -1.0) * std::conj(s0) * (sp - sm) / (2.0 * step)).real();
    EXPECT_NEAR(delay_time(solve_scattering(h, a, e)), wigner, 1e-7 * std::max(1.0, wigner)) << e;
  }
}

TEST(ScatteringModel, DerivedQuantitiesAndValidation) {
  const auto m = ScatteringModel::with_openness(Ensemble::gue(), 200, 20, 1.0);
  EXPECT_NEAR(m.openness(), 1.0, 1e-14);
  EXPECT_NEAR(m.overlap(), 1.0 / 80.0, 1e-15);  // eta = 4 M x
  EXPECT_NEAR(m.transmission_weak(), 4.0 * m.overlap(), 1e-15);
  const auto mx = ScatteringModel::with_overlap(Ensemble::gue(), 200, 20, 0.01);
  EXPECT_NEAR(mx.overlap(), 0.01, 1e-15);
  EXPECT_THROW(ScatteringModel::with_openness(Ensemble::gue(), 20, 21, 1.0), DomainError);
  EXPECT_THROW(ScatteringModel::with_overlap(Ensemble::gue(), 200, 20, 0.1), DomainError);
  EXPECT_THROW(ScatteringModel::with_openness(Ensemble::gue(), 200, 2, 10.0), DomainError);
}

TEST(Simulation, ReproducibleAcrossThreadCounts) {
  const auto model = ScatteringModel::with_openness(Ensemble::gue(), 60, 6, 1.0);
  const SimulationSummary a = run_simulation(model, 64, 123, 1);
  const SimulationSummary b = run_simulation(model, 64, 123, 3);
  EXPECT_EQ(a.enhancement.value, b.enhancement.value);
  EXPECT_EQ(a.enhancement.std_error, b.enhancement.std_error);
  EXPECT_EQ(a.mean_s_real.value, b.mean_s_real.value);
  EXPECT_EQ(a.mean_delay.value, b.mean_delay.value);
  EXPECT_EQ(a.enhancement.master_seed, 123u);
  EXPECT_EQ(a.enhancement.n_realizations, 64);
  const SimulationSummary c = run_simulation(model, 64, 124, 1);
  EXPECT_NE(a.enhancement.value, c.enhancement.value);
}

TEST(Simulation, Errors) {
  const auto one = ScatteringModel::with_openness(Ensemble::gue(), 60, 1, 0.2);
  EXPECT_THROW(estimate_enhancement_mc(one, 10, 1), DomainError);
  const auto model = ScatteringModel::with_openness(Ensemble::gue(), 60, 6, 1.0);
  EXPECT_THROW(run_simulation(model, 1, 1), DomainError);
}

TEST(Simulation, MeanSAndTransmissionWeakCoupling) {
  const double x = 0.01;
  const auto model = ScatteringModel::with_overlap(Ensemble::gue(), 200, 20, x);
  const SimulationSummary s = run_simulation(model, 600, 31);
  const double target = (1.0 - x) / (1.0 + x);
  EXPECT_LT(std::abs(s.mean_s_real.value - target), 3.0 * s.mean_s_real.std_error + 8.0 * x * x);
  EXPECT_LT(std::abs(s.mean_s_imag.value), 3.0 * s.mean_s_imag.std_error + 8.0 * x * x);
  EXPECT_LT(std::abs(s.offdiag_mean_real.value), 3.0 * s.offdiag_mean_real.std_error);
  EXPECT_LT(std::abs(s.offdiag_mean_imag.value), 3.0 * s.offdiag_mean_imag.std_error);
  // T is 1 - |<S>|^2 of the same sample, by definition
  const double t_def = 1.0 - (s.mean_s_real.value * s.mean_s_real.value + s.mean_s_imag.value * s.mean_s_imag.value);
  EXPECT_NEAR(s.transmission.value, t_def, 1e-15);
  EXPECT_LT(std::abs(s.transmission.value - 4.0 * x), 3.0 * s.transmission.std_error + 8.0 * x * x);
  EXPECT_LT(s.max_unitarity_deficiency, 1e-10);
}

TEST(Simulation, GueEnhancementMatchesAnalytic) {
  // M/N = 0.2 keeps T = eta/M small; the O(T) bias stays below one sigma
  const std::uint64_t seeds[] = {11, 12, 13};
  const double etas[] = {0.5, 1.0, 2.0};
  for (int i = 0; i < 3; ++i) {
    const auto model = ScatteringModel::with_openness(Ensemble::gue(), 200, 40, etas[i]);
    const MCEstimate f = estimate_enhancement_mc(model, 600, seeds[i]);
    EXPECT_LT(std::abs(f.value - f_gue(etas[i])), 3.0 * f.std_error) << "eta=" << etas[i] << " F=" << f.value
                                                                      << " +- " << f.std_error;
  }
}

TEST(Simulation, PoissonEnhancementIsTwo) {
  const auto model = ScatteringModel::with_openness(Ensemble::poisson_diagonal(), 200, 40, 1.0);
  const MCEstimate f = estimate_enhancement_mc(model, 600, 14);
  EXPECT_LT(std::abs(f.value - 2.0), 3.0 * f.std_error) << f.value << " +- " << f.std_error;
}

TEST(Simulation, DelayTimeVarianceGivesEnhancement) {
  const auto model = ScatteringModel::with_openness(Ensemble::gue(), 200, 40, 1.0);
  const DelayTimeStats d = delay_time_stats(model, 600, 15);
  EXPECT_LT(std::abs(d.f_from_var_q.value - f_gue(1.0)), 3.0 * d.f_from_var_q.std_error)
      << d.f_from_var_q.value << " +- " << d.f_from_var_q.std_error;
  EXPECT_GT(d.var_q_normalized.value, 0.0);
}

TEST(Simulation, MeanDelayApproachesHeisenbergOverM) {
  // <Q> = t_W T = t_H / M as the coupling goes to zero
  for (double x : {0.01, 0.001}) {
    const auto model = ScatteringModel::with_overlap(Ensemble::poisson_diagonal(), 200, 20, x);
    const DelayTimeStats d = delay_time_stats(model, 400, 16);
    const double scale = model.n_channels * model.mean_spacing / (2.0 * pi);
    EXPECT_LT(std::abs(d.mean_q.value * scale - 1.0), 3.0 * d.mean_q.std_error * scale + 4.0 * x) << x;
  }
}

TEST(SolveG, BareResolventAtVanishingCoupling) {
  auto rng = realization_stream(4, 0);
  const Spectrum sp = sample_spectrum(Ensemble::poisson_diagonal(), 50, 1.0, rng);
  const double e = 0.123;
  Complex bare = 0.0;
  for (double l : sp.levels) bare += 1.0 / (e - l);
  bare /= 50.0;
  const GSolution g = solve_g(sp, 1e-10, 0.1, e);
  EXPECT_LT(std::abs(g.g - bare), 1e-8 * std::abs(bare));
}

TEST(SolveG, SingleLevelQuadratic) {
  const Spectrum sp = Spectrum::from_levels({0.0}, 1.0);
  const double e = 0.3;
  const double gamma = 0.5;
  const double m = 2.0;
  // a c g^2 + (a + b - c) g - 1 = 0
  const Complex a = e;
  const Complex b(0.0, 0.5 * m * gamma);
  const Complex c(0.0, 0.5 * gamma);
  const Complex qa = a * c;
  const Complex qb = a + b - c;
  const Complex disc = std::sqrt(qb * qb + 4.0 * qa);
  const Complex r1 = (-qb + disc) / (2.0 * qa);
  const Complex r2 = (-qb - disc) / (2.0 * qa);
  const Complex physical = r1.imag() < 0.0 ? r1 : r2;  // retarded branch
  const GSolution g = solve_g(sp, gamma, m, e);
  EXPECT_LT(g.residual, 1e-12);
  EXPECT_LT(std::abs(g.g - physical), 1e-10);
}

TEST(SolveG, PoissonMeanSMatchesWeakCoupling) {
  const int n = 1000;
  const int channels = 100;
  const double x = 0.01;
  const double gamma = 2.0 * n * x / pi;
  const double m = double(channels) / n;
  const int spectra = 400;
  Complex sum = 0.0;
  double sum2 = 0.0;
  for (int r = 0; r < spectra; ++r) {
    auto rng = realization_stream(17, r);
    const Spectrum sp = sample_spectrum(Ensemble::poisson_diagonal(), n, 1.0, rng);
    const GSolution g = solve_g(sp, gamma, m, 0.0);
    ASSERT_LT(g.residual, 1e-12);
    const Complex s = mean_s_from_g(g.g, gamma);
    sum += s;
    sum2 += std::norm(s);
  }
  const Complex mean = sum / double(spectra);
  const double se = std::sqrt((sum2 / spectra - std::norm(mean)) / (spectra - 1.0));
  EXPECT_LT(std::abs(mean.real() - (1.0 - x) / (1.0 + x)), 3.0 * se + 8.0 * x * x);
}

TEST(SolveG, Errors) {
  EXPECT_THROW(solve_g(Spectrum{}, 1.0, 0.1, 0.0), DomainError);
  const Spectrum sp = Spectrum::from_levels({0.0, 1.0}, 1.0);
  EXPECT_THROW(solve_g(sp, -1.0, 0.1, 0.0), DomainError);
  GSolveOptions opt;
  opt.max_iterations = 1;
  opt.tol = 1e-300;
  EXPECT_THROW(solve_g(sp, 1.0, 0.5, 0.2, opt), ConvergenceError);
}

TEST(CalibrateKappa, PoissonEndHitsLowerBound) {
  const CalibrationResult r = calibrate_kappa(1e-5, 200, 1.0, 200, 41);
  EXPECT_TRUE(r.at_lower_bound);
  EXPECT_EQ(r.kappa.value(), 1e-3);
  EXPECT_LT(r.reduced_chi2, 3.0);
  EXPECT_EQ(r.s.size(), r.form_factor.size());
}

TEST(CalibrateKappa, GueEndHitsUpperBound) {
  const CalibrationResult r = calibrate_kappa(1.0, 200, 1.0, 200, 42);
  EXPECT_TRUE(r.at_upper_bound);
  EXPECT_EQ(r.kappa.value(), 1e3);
  EXPECT_LT(r.reduced_chi2, 3.0);
}

TEST(CalibrateKappa, IntermediateIsInterior) {
  const CalibrationResult r = calibrate_kappa(0.03, 200, 1.0, 200, 43);
  EXPECT_FALSE(r.at_lower_bound);
  EXPECT_FALSE(r.at_upper_bound);
  EXPECT_GT(r.kappa.value(), 1e-3);
  EXPECT_LT(r.kappa.value(), 1e3);
  EXPECT_LT(r.reduced_chi2, 3.0);
}

TEST(CalibrateKappa, IncreasesWithLambda) {
  const double k1 = calibrate_kappa(0.02, 200, 1.0, 200, 44).kappa.value();
  const double k2 = calibrate_kappa(0.06, 200, 1.0, 200, 44).kappa.value();
  EXPECT_LT(k1, k2);
}

TEST(CalibrateKappa, Errors) {
  EXPECT_THROW(calibrate_kappa(0.0, 200, 1.0, 100, 1), DomainError);
  EXPECT_THROW(calibrate_kappa(0.1, 4, 1.0, 100, 1), DomainError);
  CalibrationOptions strict;
  strict.max_reduced_chi2 = 1e-6;
  EXPECT_THROW(calibrate_kappa(0.03, 100, 1.0, 50, 1, strict), CalibrationError);
}

TEST(Simulation, TransitionSweepDecreasesTowardGue) {
  // F falls from the Poisson value toward the GUE value as lambda grows
  const double lambdas[] = {0.0, 0.03, 1.0};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const auto model = ScatteringModel::with_openness(Ensemble::transition(lambdas[i]), 200, 40, 2.0);
    f[i] = estimate_enhancement_mc(model, 400, 50 + i).value;
  }
  EXPECT_GT(f[0], f[1]);
  EXPECT_GT(f[1], f[2]);
}
