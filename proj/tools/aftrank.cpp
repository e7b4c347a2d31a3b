// Command-line front end: fit an AFT model on a CSV, run simulation
// scenarios, or run the self-verification suite against the reference
// implementations.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aftrank/csv.hpp"
#include "aftrank/dataset.hpp"
#include "aftrank/estimator.hpp"
#include "aftrank/reference.hpp"
#include "aftrank/simulation.hpp"
#include "aftrank/variance.hpp"
#include "aftrank/weights.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string default_out_dir() {
  const char* env = std::getenv("AFTRANK_OUT");
  return env && *env ? env : ".";
}

struct FitOptions {
  std::string input;
  std::string cluster_col = "cluster";
  std::string time_col = "time";
  std::string event_col = "event";
  std::vector<std::string> covariates;
  std::string variant = "robust";
  std::string scheme = "corr";
  double alpha = 2.0;
  double c_quantile = 0.95;
  bool no_robust = false;
  std::string out = default_out_dir();
};

aftrank::OmegaScheme parse_scheme(const std::string& s) {
  if (s == "unit") return aftrank::OmegaScheme::unit;
  if (s == "inv-size") return aftrank::OmegaScheme::inverse_size;
  return aftrank::OmegaScheme::correlation_adjusted;
}

int cmd_fit(const FitOptions& opt) {
  using namespace aftrank;
  CsvSchema schema{opt.cluster_col, opt.time_col, opt.event_col, opt.covariates};
  ClusteredDataset data = read_csv(opt.input, schema);
  const int p = data.dim();

  // preliminary unweighted smoothed fit supplies the residuals behind
  // the correlation and robust weights
  EstimatorConfig prelim_cfg;
  prelim_cfg.variant = Variant::gehan;
  FitResult prelim = fit(data, prelim_cfg, unit_weights(data));
  Residuals res = compute_residuals(data, prelim.beta_hat);

  OmegaScheme scheme = parse_scheme(opt.scheme);
  bool robust_h = opt.variant == "robust" && !opt.no_robust;
  WeightSet w;
  if (opt.variant == "gehan") {
    w = unit_weights(data);
  } else if (!robust_h) {
    w = make_weights(data, res, scheme, false);
  } else {
    // the Mahalanobis downweighting needs a positive MAD per column, so
    // restrict the distance to the columns that have one (binary or
    // constant covariates carry no outlyingness information)
    std::vector<int> cont;
    for (int j = 0; j < p; ++j) {
      std::vector<double> col(data.covariates().col(j).data(),
                              data.covariates().col(j).data() + data.num_obs());
      double med = detail::median_inplace(col);
      if (detail::mad_scale(data.covariates().col(j), med) > 0.0) cont.push_back(j);
    }
    w = make_weights(data, res, scheme, false);
    if (!cont.empty()) {
      Eigen::MatrixXd sub(data.num_obs(), cont.size());
      for (size_t j = 0; j < cont.size(); ++j)
        sub.col(j) = data.covariates().col(cont[j]);
      RobustScatter rs = robust_scatter(sub);
      w.h = gr_weights(sub, rs, opt.alpha,
                       chisq_quantile(opt.c_quantile, static_cast<int>(cont.size())));
      if (cont.size() < static_cast<size_t>(p))
        std::cerr << "aftrank: robust distance restricted to "
                  << cont.size() << " of " << p
                  << " covariates (others have zero MAD)\n";
    } else {
      std::cerr << "aftrank: no covariate has positive MAD; "
                   "robust downweighting disabled\n";
    }
  }

  EstimatorConfig cfg;
  cfg.beta_init = prelim.beta_hat;
  auto [fr, cov] = iterate_fit(data, cfg, w);

  std::filesystem::create_directories(opt.out);
  std::ostringstream report;
  report << std::fixed << std::setprecision(4);
  report << "model: log(time) ~ ";
  for (size_t j = 0; j < opt.covariates.size(); ++j)
    report << (j ? " + " : "") << opt.covariates[j];
  report << "\nclusters " << data.num_clusters() << ", observations "
         << data.num_obs() << ", events ";
  int n_ev = 0;
  for (int ev : data.events()) n_ev += ev;
  report << n_ev << "\n";
  report << "variant " << opt.variant << ", scheme " << opt.scheme
         << ", rho_bar " << w.rho_bar << "\n";
  report << "converged " << (fr.converged ? "yes" : "no") << " in "
         << fr.iterations << " outer iterations, |score|_inf "
         << std::scientific << fr.score_norm << std::fixed << "\n\n";
  report << std::left << std::setw(12) << "coefficient" << std::right
         << std::setw(12) << "estimate" << std::setw(12) << "(SE)" << "\n";
  for (int j = 0; j < p; ++j)
    report << std::left << std::setw(12) << opt.covariates[j] << std::right
           << std::setw(12) << fr.beta_hat[j] << std::setw(12)
           << cov.std_errors[j] << "\n";
  std::cout << report.str();
  {
    std::ofstream f(opt.out + "/fit_report.txt");
    f << report.str();
  }
  {
    std::ofstream f(opt.out + "/h_weights.csv");
    f << opt.cluster_col << ",row_in_cluster,h\n" << std::setprecision(10);
    for (int i = 0; i < data.num_clusters(); ++i)
      for (int m = data.cluster_begin(i); m < data.cluster_end(i); ++m)
        f << data.cluster_ids()[i] << ',' << (m - data.cluster_begin(i) + 1)
          << ',' << w.h[m] << "\n";
  }
  if (!fr.converged) {
    std::cerr << "aftrank: fit did not converge\n";
    return kExitNumeric;
  }
  return kExitOk;
}

struct SimulateOptions {
  std::string scenario_file;
  bool quick = false;
  bool full = false;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out = default_out_dir();
};

std::vector<aftrank::SimulationScenario> builtin_grid(bool full, std::uint64_t seed) {
  using namespace aftrank;
  std::vector<SimulationScenario> out;
  if (!full) {
    // the two cells the scaled acceptance checks use
    for (bool contaminated : {false, true}) {
      SimulationScenario sc;
      sc.name = contaminated ? "contaminated" : "base";
      sc.n_clusters = 50;
      sc.rho = 0.5;
      sc.censoring_target = 0.15;
      sc.contamination =
          contaminated ? Contamination::five_pct_plus5 : Contamination::none;
      sc.replications = 200;
      sc.seed = seed + (contaminated ? 1 : 0);
      out.push_back(sc);
    }
    return out;
  }
  int idx = 0;
  for (ErrorLaw law : {ErrorLaw::mvn, ErrorLaw::mvt3})
    for (int n : {50, 100})
      for (double rho : {0.5, 0.8})
        for (double cens : {0.15, 0.30})
          for (bool contaminated : {false, true}) {
            SimulationScenario sc;
            std::ostringstream name;
            name << (law == ErrorLaw::mvn ? "mvn" : "mvt3") << "_n" << n
                 << "_rho" << rho << "_cens" << cens
                 << (contaminated ? "_contam" : "");
            sc.name = name.str();
            sc.n_clusters = n;
            sc.error_law = law;
            sc.rho = rho;
            sc.censoring_target = cens;
            sc.contamination =
                contaminated ? Contamination::five_pct_plus5 : Contamination::none;
            sc.replications = 1000;
            sc.seed = seed + idx++;
            out.push_back(sc);
          }
  return out;
}

int cmd_simulate(const SimulateOptions& opt) {
  using namespace aftrank;
  std::vector<SimulationScenario> scenarios;
  if (!opt.scenario_file.empty())
    scenarios = parse_scenarios(opt.scenario_file);
  else
    scenarios = builtin_grid(opt.full, opt.seed);

  std::filesystem::create_directories(opt.out);
  std::vector<ScenarioResult> results;
  for (const auto& sc : scenarios) {
    std::cerr << "running scenario '" << sc.name << "' (" << sc.replications
              << " replicates)\n";
    results.push_back(run_scenario(sc, opt.threads));
    if (results.back().failures > 0)
      std::cerr << "  " << results.back().failures << " replicates failed\n";
  }
  emit_tables(results, opt.out);
  std::cout << "wrote " << (2 + results.size()) << " table files to " << opt.out
            << "\n";
  return kExitOk;
}

struct VerifyOptions {
  std::uint64_t seed = 12345;
  int datasets = 25;
  double phi_offset = 0.0;  // test fixture: shifts one side of each comparison
};

int cmd_verify(const VerifyOptions& opt) {
  using namespace aftrank;
  RngStream rng(opt.seed);
  bool all_ok = true;
  auto line = [&](const std::string& name, double err, double tol) {
    bool ok = err < tol;
    all_ok = all_ok && ok;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << std::left << std::setw(44)
              << name << " max err " << std::scientific << std::setprecision(2)
              << err << " (tol " << tol << ")\n";
  };

  double e_score_ns = 0, e_obj_ns = 0, e_score_sm = 0, e_obj_sm = 0;
  double e_jac = 0, e_xi = 0, e_z = 0, e_v = 0, e_grad = 0, e_dsdb = 0;
  for (int rep = 0; rep < opt.datasets; ++rep) {
    // small random clustered dataset
    int n = 3 + rep % 5;
    std::vector<std::vector<Observation>> cl(n);
    bool any_event = false;
    for (int i = 0; i < n; ++i) {
      int ni = 1 + static_cast<int>(rng.uniform() * 3);
      cl[i].resize(ni);
      for (auto& o : cl[i]) {
        o.log_time = rng.normal();
        o.event = rng.uniform() < 0.7 ? 1 : 0;
        any_event = any_event || o.event;
        o.covariates.resize(2);
        o.covariates << rng.normal(), rng.normal();
      }
    }
    if (!any_event) cl[0][0].event = 1;
    auto d = ClusteredDataset::build(cl);
    WeightSet w;
    w.omega.resize(n);
    for (int i = 0; i < n; ++i) w.omega[i] = 0.2 + rng.uniform();
    w.h.resize(d.num_obs());
    for (int m = 0; m < d.num_obs(); ++m) w.h[m] = 0.1 + 0.9 * rng.uniform();
    Eigen::VectorXd beta(2);
    beta << rng.normal(), rng.normal();
    Eigen::MatrixXd a(2, 2);
    a << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    Eigen::MatrixXd gamma = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(2, 2);

    auto inf = [](const auto& arr) { return arr.abs().maxCoeff(); };
    const double off = opt.phi_offset;
    e_score_ns = std::max(e_score_ns,
                          inf(score_nonsmooth(d, w, beta).array() + off -
                              reference::score_nonsmooth(d, w, beta).array()));
    e_obj_ns = std::max(e_obj_ns, std::fabs(objective_nonsmooth(d, w, beta) + off -
                                            reference::objective_nonsmooth(d, w, beta)));
    e_score_sm = std::max(
        e_score_sm, inf(score_smoothed(d, w, beta, gamma).array() + off -
                        reference::score_smoothed(d, w, beta, gamma).array()));
    e_obj_sm = std::max(e_obj_sm,
                        std::fabs(objective_smoothed(d, w, beta, gamma) + off -
                                  reference::objective_smoothed(d, w, beta, gamma)));
    e_jac = std::max(e_jac, inf(jacobian_smoothed(d, w, beta, gamma).array() + off -
                                reference::jacobian_smoothed(d, w, beta, gamma).array()));
    e_xi = std::max(e_xi, inf(xi_terms(d, w, beta).array() + off -
                              reference::xi_terms(d, w, beta).array()));
    e_v = std::max(e_v, inf(v_hat(d, w, beta).array() + off -
                            reference::v_hat(d, w, beta).array()));
    for (int t = 0; t < d.num_obs(); ++t)
      for (int pv = 0; pv < d.num_obs(); ++pv)
        e_z = std::max(e_z, inf(z_term(d, w, beta, t, pv).array() + off -
                                reference::z_term(d, w, beta, t, pv).array()));

    // gradient identities by central finite differences
    const double h = 1e-6;
    Eigen::VectorXd s = score_smoothed(d, w, beta, gamma);
    Eigen::MatrixXd jac = jacobian_smoothed(d, w, beta, gamma);
    double scale = std::max(1.0, jac.lpNorm<Eigen::Infinity>());
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd bp = beta, bm = beta;
      bp[j] += h;
      bm[j] -= h;
      double fd = (objective_smoothed(d, w, bp, gamma) -
                   objective_smoothed(d, w, bm, gamma)) /
                  (2 * h);
      e_grad = std::max(e_grad, std::fabs(fd + off - s[j]) /
                                    std::max(1.0, std::fabs(s[j])));
      Eigen::VectorXd col = (score_smoothed(d, w, bp, gamma) -
                             score_smoothed(d, w, bm, gamma)) /
                            (2 * h);
      e_dsdb = std::max(e_dsdb, (col.array() + off - jac.col(j).array())
                                    .abs()
                                    .maxCoeff() /
                                    scale);
    }
  }

  line("S (nonsmooth) vs brute force", e_score_ns, 1e-10);
  line("L (nonsmooth) vs brute force", e_obj_ns, 1e-10);
  line("S~ (smoothed) vs brute force", e_score_sm, 1e-10);
  line("L~ (smoothed) vs brute force", e_obj_sm, 1e-10);
  line("D~ (Jacobian) vs brute force", e_jac, 1e-10);
  line("xi terms vs brute force", e_xi, 1e-10);
  line("z terms vs brute force", e_z, 1e-10);
  line("V hat vs brute force", e_v, 1e-10);
  line("grad L~ = S~ (finite differences)", e_grad, 1e-5);
  line("dS~/dbeta = D~ (finite differences)", e_dsdb, 1e-5);

  // normal cdf against Simpson quadrature, chi-square quantile inversion
  double e_phi = 0;
  for (double x : {0.5, 1.0, 1.96, 3.0}) {
    const int steps = 20000;
    double hh = x / steps;
    double sum = reference::norm_pdf(0.0) + reference::norm_pdf(x);
    for (int i = 1; i < steps; ++i)
      sum += (i % 2 ? 4.0 : 2.0) * reference::norm_pdf(i * hh);
    double quad = 0.5 + sum * hh / 3.0;
    e_phi = std::max(e_phi, std::fabs(std_normal_cdf(x) + opt.phi_offset - quad));
  }
  line("Phi vs quadrature", e_phi, 1e-10);
  double e_chi = 0;
  for (int df = 1; df <= 8; ++df)
    for (double pr : {0.05, 0.5, 0.95})
      e_chi = std::max(
          e_chi, std::fabs(chisq_cdf(chisq_quantile(pr, df), df) - pr));
  line("chi-square quantile inverts cdf", e_chi, 1e-8);

  std::cout << (all_ok ? "verify: all checks passed\n"
                       : "verify: FAILURES detected\n");
  return all_ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rank-based AFT regression for clustered censored data"};
  app.require_subcommand(1);

  FitOptions fopt;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model to a CSV file");
  fit_cmd->add_option("--input", fopt.input, "input CSV path")
      ->required()
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--cluster-col", fopt.cluster_col, "cluster id column");
  fit_cmd->add_option("--time-col", fopt.time_col, "survival time column");
  fit_cmd->add_option("--event-col", fopt.event_col, "event indicator column");
  fit_cmd->add_option("--covariates", fopt.covariates, "covariate columns")
      ->required()
      ->delimiter(',');
  fit_cmd->add_option("--variant", fopt.variant, "estimator variant")
      ->check(CLI::IsMember({"gehan", "weighted", "robust"}));
  fit_cmd->add_option("--scheme", fopt.scheme, "cluster weight scheme")
      ->check(CLI::IsMember({"unit", "inv-size", "corr"}));
  fit_cmd->add_option("--alpha", fopt.alpha, "covariate weight exponent");
  fit_cmd->add_option("--c-quantile", fopt.c_quantile,
                      "chi-square quantile level for the weight cutoff");
  fit_cmd->add_flag("--no-robust", fopt.no_robust,
                    "disable the covariate downweighting");
  fit_cmd->add_option("--out", fopt.out, "output directory (env AFTRANK_OUT)");

  SimulateOptions sopt;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "run simulation scenarios");
  sim_cmd->add_option("--scenarios", sopt.scenario_file, "scenario config file")
      ->check(CLI::ExistingFile);
  sim_cmd->add_flag("--quick", sopt.quick, "built-in 2-cell grid, 200 replicates");
  sim_cmd->add_flag("--full", sopt.full, "built-in 32-cell grid, 1000 replicates");
  sim_cmd->add_option("--seed", sopt.seed, "base seed");
  sim_cmd->add_option("--threads", sopt.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sopt.out, "output directory (env AFTRANK_OUT)");

  VerifyOptions vopt;
  CLI::App* ver_cmd =
      app.add_subcommand("verify", "check fast paths against brute force");
  ver_cmd->add_option("--seed", vopt.seed, "seed for the random instances");
  ver_cmd->add_option("--datasets", vopt.datasets, "number of random instances");
  ver_cmd->add_option("--phi-offset", vopt.phi_offset,
                      "perturbation injected into each comparison (testing)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fopt);
    if (sim_cmd->parsed()) return cmd_simulate(sopt);
    return cmd_verify(vopt);
  } catch (const aftrank::NumericError& e) {
    std::cerr << "aftrank: numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const aftrank::DataError& e) {
    std::cerr << "aftrank: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "aftrank: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "aftrank: error: " << e.what() << "\n";
    return kExitData;
  }
}
