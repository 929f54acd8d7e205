#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "elastic/elastic.hpp"

namespace {

using namespace elastic;
using namespace elastic::cli;
using Json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Common {
  std::string out;
  std::string format = "csv";
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  QuadratureConfig quadrature() const {
    QuadratureConfig cfg;
    cfg.abs_tol = abs_tol;
    cfg.rel_tol = rel_tol;
    cfg.validate();
    return cfg;
  }
  void add_meta(Table& t) const {
    t.meta.emplace_back("abs_tol", format_number(abs_tol));
    t.meta.emplace_back("rel_tol", format_number(rel_tol));
  }
};

void add_common(CLI::App* sub, Common& c, std::string default_format = "csv") {
  c.format = std::move(default_format);
  sub->add_option("--out", c.out, "Output path (default stdout)");
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  sub->add_option("--abs-tol", c.abs_tol, "Absolute quadrature tolerance")->capture_default_str();
  sub->add_option("--rel-tol", c.rel_tol, "Relative quadrature tolerance")->capture_default_str();
  sub->add_option("--seed", c.seed, "Master random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
}

// formfactor ---------------------------------------------------------------

struct FormfactorArgs {
  std::string kappa = "5";
  std::string s_grid = "0:2:41";
};

int run_formfactor(const FormfactorArgs& a, const Common& c) {
  const QuadratureConfig cfg = c.quadrature();
  const Chaoticity kappa = Chaoticity::parse(a.kappa);
  const std::vector<double> s = parse_grid(a.s_grid);
  for (double v : s) ScaledTime{v};

  Table t;
  t.command = "formfactor";
  t.meta.emplace_back("kappa", kappa.to_string());
  c.add_meta(t);
  t.columns = {"s", "b2", "abs_error_estimate"};
  t.rows.resize(s.size());
  parallel_for(s.size(), c.threads, [&](std::size_t i) {
    const IntegralResult r = b2_transient_detailed(ScaledTime(s[i]), kappa, cfg);
    t.rows[i] = {s[i], r.value, r.error_estimate};
  });
  emit_table(t, c.out, c.format);
  return ok;
}

// curve --------------------------------------------------------------------

struct CurveArgs {
  std::string kappas = "0.5,5,50";
  std::string eta_grid = "0:12:121";
  std::string method = "all";
  int series_order = 3;
  bool tangent = true;
};

int run_curve(const CurveArgs& a, const Common& c) {
  const QuadratureConfig cfg = c.quadrature();
  const std::vector<Chaoticity> kappas = parse_kappa_list(a.kappas);
  const std::vector<double> etas = parse_grid(a.eta_grid);
  for (double e : etas) Openness{e};
  if (a.series_order < 1 || a.series_order > 3) throw DomainError("--series-order must be 1, 2 or 3");

  std::vector<Method> methods;
  if (a.method == "exact" || a.method == "all") methods.push_back(Method::exact);
  if (a.method == "series" || a.method == "all") methods.push_back(Method::series_small_kappa);
  if (a.method == "large-kappa" || a.method == "all") methods.push_back(Method::approx_large_kappa);

  struct Task {
    Chaoticity kappa;
    double eta;
    Method method;
  };
  std::vector<Task> tasks;
  for (const auto& k : kappas)
    for (Method m : methods)
      for (double e : etas) {
        // the series is a Laurent expansion in eta and the large-kappa form
        // needs kappa > 0; skip points where they are undefined
        if (m == Method::series_small_kappa && (k.is_infinite() || (e == 0.0 && !k.is_zero()))) continue;
        if (m == Method::approx_large_kappa && k.is_zero()) continue;
        tasks.push_back({k, e, m});
      }

  Table t;
  t.command = "curve";
  t.meta.emplace_back("kappas", a.kappas);
  t.meta.emplace_back("eta_grid", a.eta_grid);
  t.meta.emplace_back("method", a.method);
  t.meta.emplace_back("series_order", std::to_string(a.series_order));
  c.add_meta(t);
  t.columns = {"kappa", "eta", "F", "method", "error_estimate", "regime"};
  t.rows.resize(tasks.size());
  parallel_for(tasks.size(), c.threads, [&](std::size_t i) {
    const Task& task = tasks[i];
    EnhancementValue v;
    if (task.method == Method::exact)
      v = enhancement_exact(Openness(task.eta), task.kappa, cfg);
    else if (task.method == Method::series_small_kappa)
      v = task.eta == 0.0 ? EnhancementValue{2.0, Method::series_small_kappa, 0.0, false}
                          : series_small_kappa(Openness(task.eta), task.kappa, a.series_order);
    else
      v = approx_large_kappa(Openness(task.eta), task.kappa);
    t.rows[i] = {task.kappa.to_string(), task.eta, v.f, to_string(v.method), v.error_estimate,
                 std::string(v.outside_regime ? "outside" : "ok")};
  });
  if (a.tangent)
    for (double e : etas) t.rows.push_back({std::string("any"), e, 2.0 - 0.5 * e, std::string("tangent"), 0.0,
                                            std::string(e <= 1.0 ? "ok" : "outside")});
  emit_table(t, c.out, c.format);
  return ok;
}

// critical -----------------------------------------------------------------

struct CriticalArgs {
  std::string kappas = "0.5,5,50";
};

int run_critical(const CriticalArgs& a, const Common& c) {
  const QuadratureConfig cfg = c.quadrature();
  const std::vector<Chaoticity> kappas = parse_kappa_list(a.kappas);

  Table t;
  t.command = "critical";
  t.meta.emplace_back("kappas", a.kappas);
  c.add_meta(t);
  t.columns = {"kappa", "eta_c", "f_min", "df_deta_at_eta_c", "status"};
  t.rows.resize(kappas.size());
  std::vector<std::string> failures(kappas.size());
  parallel_for(kappas.size(), c.threads, [&](std::size_t i) {
    const Chaoticity k = kappas[i];
    if (k.is_zero() || k.is_infinite()) {
      t.rows[i] = {k.to_string(), kNaN, kNaN, kNaN, std::string("no_critical_point")};
      failures[i] = k.is_zero() ? "F is identically 2 at kappa = 0"
                                : "F decreases monotonically at kappa = inf";
      return;
    }
    try {
      const CriticalPoint p = eta_critical(k, cfg);
      t.rows[i] = {k.to_string(), p.eta_c, p.f_min, p.df_at_eta_c, std::string("ok")};
    } catch (const NoCriticalPoint& e) {
      t.rows[i] = {k.to_string(), kNaN, kNaN, kNaN, std::string("no_critical_point")};
      failures[i] = e.what();
    }
  });
  emit_table(t, c.out, c.format);
  for (std::size_t i = 0; i < kappas.size(); ++i)
    if (!failures[i].empty())
      return report_error("no_critical_point", convergence_error,
                          "kappa = " + kappas[i].to_string() + ": " + failures[i]);
  return ok;
}

// invert -------------------------------------------------------------------

struct InvertArgs {
  std::vector<double> f_min;
  double kappa_lo = 1e-3;
  double kappa_hi = 1e4;
};

int run_invert(const InvertArgs& a, const Common& c) {
  const QuadratureConfig cfg = c.quadrature();
  if (a.f_min.empty()) throw DomainError("--fmin is required");
  for (double f : a.f_min)
    if (!(f > 1.0 && f < 2.0)) throw DomainError("F_min must lie in (1, 2), got " + format_number(f));
  InversionOptions opt;
  opt.kappa_lo = a.kappa_lo;
  opt.kappa_hi = a.kappa_hi;
  opt.threads = c.threads;
  const FminInverter inverter(cfg, opt);

  Table t;
  t.command = "invert";
  t.meta.emplace_back("kappa_range", format_number(a.kappa_lo) + ":" + format_number(a.kappa_hi));
  t.meta.emplace_back("attainable_f_min", format_number(inverter.floor()) + ":" + format_number(inverter.ceiling()));
  c.add_meta(t);
  t.columns = {"f_min_observed", "kappa", "eta_c", "f_min"};
  for (double f : a.f_min) {
    const CriticalPoint p = inverter.invert(f);
    t.rows.push_back({f, p.kappa.value(), p.eta_c, p.f_min});
  }
  emit_table(t, c.out, c.format);
  return ok;
}

// simulate -----------------------------------------------------------------

struct SimulateArgs {
  std::string ensemble = "gue";
  double lambda = 0.0;
  int n_levels = 200;
  int n_channels = 20;
  double eta = 1.0;
  long realizations = 2000;
  bool compare = false;
  double z_threshold = 3.0;
  std::string kappa;  // transition compare: analytic kappa; calibrated when empty
  long calibration_realizations = 400;
  std::string records;
};

Json estimate_json(const rmt::MCEstimate& e) {
  return Json{{"value", Table::json_number(e.value)}, {"std_error", Table::json_number(e.std_error)}};
}

void write_records(const std::string& path, const rmt::SimulationSummary& s, std::uint64_t seed) {
  emit(path, [&](std::ostream& os) {
    os << kCsvVersion << '\n';
    os << "# command=simulate-records\n";
    os << "# ensemble=" << s.model.ensemble.name() << '\n';
    os << "# n_levels=" << s.model.n_levels << "\n# n_channels=" << s.model.n_channels << '\n';
    os << "# gamma=" << format_number(s.model.gamma) << "\n# seed=" << seed << '\n';
    os << "index,diag_sum_re,diag_sum_im,diag_abs2_sum,offdiag_sum_re,offdiag_sum_im,offdiag_abs2_sum,"
          "delay_time,unitarity_deficiency\n";
    for (const auto& r : s.records)
      os << r.index << ',' << format_number(r.diag_sum.real()) << ',' << format_number(r.diag_sum.imag()) << ','
         << format_number(r.diag_abs2_sum) << ',' << format_number(r.offdiag_sum.real()) << ','
         << format_number(r.offdiag_sum.imag()) << ',' << format_number(r.offdiag_abs2_sum) << ','
         << format_number(r.delay_time) << ',' << format_number(r.unitarity_deficiency) << '\n';
  });
}

int run_simulate(const SimulateArgs& a, const Common& c) {
  const QuadratureConfig cfg = c.quadrature();
  rmt::Ensemble ensemble;
  if (a.ensemble == "gue")
    ensemble = rmt::Ensemble::gue();
  else if (a.ensemble == "poisson")
    ensemble = rmt::Ensemble::poisson_diagonal();
  else
    ensemble = rmt::Ensemble::transition(a.lambda);
  if (a.n_channels < 2) throw DomainError("simulate needs at least 2 channels for the enhancement estimate");
  const auto model = rmt::ScatteringModel::with_openness(ensemble, a.n_levels, a.n_channels, a.eta);

  std::optional<Chaoticity> kappa;
  std::optional<rmt::CalibrationResult> calibration;
  if (a.compare) {
    if (ensemble.kind == rmt::EnsembleKind::gue)
      kappa = Chaoticity::infinite();
    else if (ensemble.kind == rmt::EnsembleKind::poisson_diagonal || a.lambda == 0.0)
      kappa = Chaoticity::regular();
    else if (!a.kappa.empty())
      kappa = Chaoticity::parse(a.kappa);
    else {
      rmt::CalibrationOptions opt;
      opt.threads = c.threads;
      calibration = rmt::calibrate_kappa(a.lambda, a.n_levels, model.mean_spacing, a.calibration_realizations,
                                         c.seed ^ 0x5bd1e995ULL, opt);
      kappa = calibration->kappa;
    }
  }

  const rmt::SimulationSummary s = rmt::run_simulation(model, a.realizations, c.seed, c.threads);
  if (!a.records.empty()) write_records(a.records, s, c.seed);

  Json model_json{{"ensemble", ensemble.name()},
                  {"lambda", a.lambda},
                  {"n_levels", model.n_levels},
                  {"n_channels", model.n_channels},
                  {"gamma", model.gamma},
                  {"mean_spacing", model.mean_spacing},
                  {"energy", model.energy},
                  {"x", model.overlap()},
                  {"transmission_4x", model.transmission_weak()},
                  {"eta", model.openness()}};
  Json report{{"command", "simulate"},
              {"schema", "elastic-cli v1"},
              {"model", model_json},
              {"n_realizations", a.realizations},
              {"seed", c.seed},
              {"enhancement", estimate_json(s.enhancement)},
              {"transmission", estimate_json(s.transmission)},
              {"mean_s_re", estimate_json(s.mean_s_real)},
              {"mean_s_im", estimate_json(s.mean_s_imag)},
              {"offdiag_mean_re", estimate_json(s.offdiag_mean_real)},
              {"offdiag_mean_im", estimate_json(s.offdiag_mean_imag)},
              {"mean_delay_time", estimate_json(s.mean_delay)},
              {"var_delay_time_normalized", estimate_json(s.var_delay_normalized)},
              {"enhancement_from_delay_time", estimate_json(s.enhancement_from_delay)},
              {"max_unitarity_deficiency", s.max_unitarity_deficiency}};

  int status = ok;
  if (kappa) {
    const double f = enhancement_exact(Openness(model.openness()), *kappa, cfg).f;
    const double z = (s.enhancement.value - f) / s.enhancement.std_error;
    const bool pass = std::abs(z) < a.z_threshold;
    Json cmp{{"kappa", kappa->to_string()},
             {"analytic_f", f},
             {"z", Table::json_number(z)},
             {"threshold", a.z_threshold},
             {"pass", pass}};
    if (calibration)
      cmp["calibration"] = Json{{"reduced_chi2", calibration->reduced_chi2},
                                {"at_lower_bound", calibration->at_lower_bound},
                                {"at_upper_bound", calibration->at_upper_bound},
                                {"n_realizations", a.calibration_realizations}};
    report["compare"] = cmp;
    if (!pass) status = comparison_failed;
  }

  if (c.format == "json") {
    emit(c.out, [&](std::ostream& os) { os << report.dump(2) << '\n'; });
  } else {
    Table t;
    t.command = "simulate";
    for (const auto& [k, v] : model_json.items()) t.meta.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
    t.meta.emplace_back("n_realizations", std::to_string(a.realizations));
    t.meta.emplace_back("seed", std::to_string(c.seed));
    t.columns = {"quantity", "value", "std_error"};
    for (const auto& [k, v] : report.items())
      if (v.is_object() && v.contains("std_error"))
        t.rows.push_back({k, v["value"].is_number() ? v["value"].get<double>() : kNaN,
                          v["std_error"].is_number() ? v["std_error"].get<double>() : kNaN});
    t.rows.push_back({std::string("max_unitarity_deficiency"), s.max_unitarity_deficiency, 0.0});
    if (report.contains("compare")) {
      t.meta.emplace_back("compare_kappa", report["compare"]["kappa"].get<std::string>());
      t.rows.push_back({std::string("analytic_f"), report["compare"]["analytic_f"].get<double>(), 0.0});
      const auto& z = report["compare"]["z"];
      t.rows.push_back({std::string("z"), z.is_number() ? z.get<double>() : kNaN, 0.0});
    }
    emit_table(t, c.out, c.format);
  }
  if (status == comparison_failed)
    return report_error("comparison_failed", status,
                        "|z| = " + format_number(std::abs(report["compare"]["z"].is_number()
                                                              ? report["compare"]["z"].get<double>()
                                                              : kNaN)) +
                            " >= " + format_number(a.z_threshold));
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elastic enhancement factor across the Poisson -> GUE crossover"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);

  Common ff_common, curve_common, crit_common, inv_common, sim_common;
  FormfactorArgs ff;
  CurveArgs curve;
  CriticalArgs crit;
  InvertArgs inv;
  SimulateArgs sim;

  auto* ff_cmd = app.add_subcommand("formfactor", "Tabulate B2(s|kappa)");
  ff_cmd->add_option("--kappa", ff.kappa, "Chaoticity (number or inf)")->capture_default_str();
  ff_cmd->add_option("--s", ff.s_grid, "s grid: start:stop:count or comma list")->capture_default_str();
  add_common(ff_cmd, ff_common);

  auto* curve_cmd = app.add_subcommand("curve", "F(eta|kappa) curves (defaults reproduce the standard figure)");
  curve_cmd->add_option("--kappa", curve.kappas, "Comma list of kappa values")->capture_default_str();
  curve_cmd->add_option("--eta", curve.eta_grid, "eta grid: start:stop:count or comma list")->capture_default_str();
  curve_cmd->add_option("--method", curve.method, "Method")
      ->check(CLI::IsMember({"exact", "series", "large-kappa", "all"}))
      ->capture_default_str();
  curve_cmd->add_option("--series-order", curve.series_order, "Small-kappa series order")->capture_default_str();
  curve_cmd->add_flag("!--no-tangent", curve.tangent, "Omit the 2 - eta/2 reference rows");
  add_common(curve_cmd, curve_common);

  auto* crit_cmd = app.add_subcommand("critical", "Critical openness eta_c and F_min");
  crit_cmd->add_option("--kappa", crit.kappas, "Comma list of kappa values")->capture_default_str();
  add_common(crit_cmd, crit_common);

  auto* inv_cmd = app.add_subcommand("invert", "Chaoticity kappa from an observed F_min");
  inv_cmd->add_option("--fmin,fmin", inv.f_min, "Observed minimum enhancement(s)")->required();
  inv_cmd->add_option("--kappa-lo", inv.kappa_lo, "Lower end of the kappa search range")->capture_default_str();
  inv_cmd->add_option("--kappa-hi", inv.kappa_hi, "Upper end of the kappa search range")->capture_default_str();
  add_common(inv_cmd, inv_common);

  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo estimate of F, T, <S> and delay times");
  sim_cmd->add_option("--ensemble", sim.ensemble, "Internal Hamiltonian ensemble")
      ->check(CLI::IsMember({"gue", "poisson", "transition"}))
      ->capture_default_str();
  sim_cmd->add_option("--lambda", sim.lambda, "Transition coupling strength")->capture_default_str();
  sim_cmd->add_option("--n", sim.n_levels, "Number of levels N")->capture_default_str();
  sim_cmd->add_option("--m", sim.n_channels, "Number of channels M")->capture_default_str();
  sim_cmd->add_option("--eta", sim.eta, "Openness; fixes the coupling gamma")->capture_default_str();
  sim_cmd->add_option("--realizations", sim.realizations, "Number of realizations")->capture_default_str();
  sim_cmd->add_flag("--compare", sim.compare, "Compare F with the analytic value");
  sim_cmd->add_option("--z-threshold", sim.z_threshold, "Failure threshold for |z|")->capture_default_str();
  sim_cmd->add_option("--kappa", sim.kappa, "Analytic kappa for transition comparisons (calibrated if omitted)");
  sim_cmd->add_option("--calibration-realizations", sim.calibration_realizations,
                      "Realizations used by the kappa calibration")
      ->capture_default_str();
  sim_cmd->add_option("--records", sim.records, "Write per-realization records (CSV) to this path");
  add_common(sim_cmd, sim_common, "json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage_error", domain_error, e.what());
  }

  try {
    if (*ff_cmd) return run_formfactor(ff, ff_common);
    if (*curve_cmd) return run_curve(curve, curve_common);
    if (*crit_cmd) return run_critical(crit, crit_common);
    if (*inv_cmd) return run_invert(inv, inv_common);
    if (*sim_cmd) return run_simulate(sim, sim_common);
  } catch (const DomainError& e) {
    return report_error("domain_error", domain_error, e.what());
  } catch (const CalibrationError& e) {
    return report_error("calibration_failed", convergence_error, e.what());
  } catch (const NoCriticalPoint& e) {
    return report_error("no_critical_point", convergence_error, e.what());
  } catch (const ConvergenceError& e) {
    return report_error("convergence_error", convergence_error, e.what());
  } catch (const SolverError& e) {
    return report_error("solver_error", convergence_error, e.what());
  } catch (const std::exception& e) {
    return report_error("internal_error", 1, e.what());
  }
  return ok;
}
