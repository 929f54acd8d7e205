// Walk through the library: the enhancement curve for one kappa, its minimum,
// the inverse map, and a small Monte Carlo cross-check at the GUE endpoint.

#include <cstdio>

#include "elastic/elastic.hpp"

int main() {
  using namespace elastic;
  const Chaoticity kappa = Chaoticity::finite(5.0);

  std::printf("eta      F_exact    F_series   F_large_kappa\n");
  for (double eta : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const Openness e(eta);
    std::printf("%-8.2f %-10.6f %-10.6f %-10.6f\n", eta, enhancement_exact(e, kappa).f,
                series_small_kappa(e, kappa, 3).f, approx_large_kappa(e, kappa).f);
  }

  const CriticalPoint cp = eta_critical(kappa);
  std::printf("\nkappa = 5: eta_c = %.6f, F_min = %.8f\n", cp.eta_c, cp.f_min);
  std::printf("kappa recovered from F_min: %.6f\n", kappa_from_fmin(cp.f_min).value());

  // T = eta/M = 0.1 here, so expect the estimate a few hundredths low
  const auto model = rmt::ScatteringModel::with_openness(rmt::Ensemble::gue(), 100, 10, 1.0);
  const auto mc = rmt::run_simulation(model, 400, 1);
  std::printf("\nGUE Monte Carlo (N=100, M=10, eta=1, 400 samples): F = %.4f +- %.4f, analytic %.4f\n",
              mc.enhancement.value, mc.enhancement.std_error, f_gue(1.0));
  return 0;
}
