#pragma once

// Monte Carlo engine: clustered AFT data generation (exchangeable normal
// or t3 errors, cluster-level and within-cluster covariates, optional 5%
// covariate contamination), censoring-rate calibration for U(0, tau)
// censoring, scenario execution for the four estimators, and table output.

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "aftrank/dataset.hpp"
#include "aftrank/estimator.hpp"
#include "aftrank/stats.hpp"
#include "aftrank/variance.hpp"
#include "aftrank/weights.hpp"

namespace aftrank {

enum class ErrorLaw { mvn, mvt3 };
enum class Contamination { none, five_pct_plus5 };

// Whether the +5 contamination of X2 is applied before the response is
// generated (contaminated design drives T, so the model stays correctly
// specified) or only to the observed design afterwards (measurement
// error; this is what biases the unweighted estimators, and the default).
enum class ContaminationMode { before_response, after_response };

struct SimulationScenario {
  std::string name = "scenario";
  int n_clusters = 50;
  int cluster_size_min = 3;
  int cluster_size_max = 10;
  Eigen::Vector2d beta_true{1.2, 1.5};
  ErrorLaw error_law = ErrorLaw::mvn;
  double rho = 0.5;
  double censoring_target = 0.15;
  Contamination contamination = Contamination::none;
  ContaminationMode contamination_mode = ContaminationMode::after_response;
  int replications = 1000;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_clusters < 2) throw std::invalid_argument("scenario: n_clusters < 2");
    if (!(censoring_target > 0.0 && censoring_target < 1.0))
      throw std::invalid_argument("scenario: censoring target must be in (0,1)");
    if (replications < 1) throw std::invalid_argument("scenario: replications < 1");
    if (cluster_size_min < 1 || cluster_size_max < cluster_size_min)
      throw std::invalid_argument("scenario: bad cluster size range");
  }
};

namespace detail {

inline Eigen::VectorXd draw_errors(const SimulationScenario& sc, int n, RngStream& rng) {
  ExchangeableCorrelation corr(sc.rho, n);
  if (sc.error_law == ErrorLaw::mvn) return sample_mvn_exchangeable(n, corr, rng);
  return sample_mvt_exchangeable(n, corr, 3, rng);
}

}  // namespace detail

// One simulated dataset. tau <= 0 disables censoring entirely.
inline ClusteredDataset generate_dataset(const SimulationScenario& sc, double tau,
                                         RngStream& rng) {
  std::vector<std::vector<Observation>> clusters(sc.n_clusters);
  for (int i = 0; i < sc.n_clusters; ++i) {
    const int ni = rng.uniform_int(sc.cluster_size_min, sc.cluster_size_max);
    const double x1 = rng.normal();  // cluster-level covariate
    Eigen::VectorXd eps = detail::draw_errors(sc, ni, rng);
    clusters[i].resize(ni);
    for (int k = 0; k < ni; ++k) {
      double x2 = rng.normal();  // within-cluster covariate
      bool hit = sc.contamination == Contamination::five_pct_plus5 &&
                 rng.uniform() < 0.05;
      double x2_model = x2, x2_obs = x2;
      if (hit) {
        if (sc.contamination_mode == ContaminationMode::before_response)
          x2_model = x2_obs = x2 + 5.0;
        else
          x2_obs = x2 + 5.0;
      }
      const double log_t = sc.beta_true[0] * x1 + sc.beta_true[1] * x2_model + eps[k];
      double log_time = log_t;
      int event = 1;
      if (tau > 0.0) {
        const double log_c = std::log(rng.uniform(0.0, tau));
        if (log_c < log_t) {
          log_time = log_c;
          event = 0;
        }
      }
      Observation& o = clusters[i][k];
      o.log_time = log_time;
      o.event = event;
      o.covariates.resize(2);
      o.covariates << x1, x2_obs;
    }
  }
  return ClusteredDataset::build(clusters);
}

// Calibrates tau so that the censoring rate of C ~ U(0, tau) hits the
// scenario's target within +-0.005, by bisection on a pilot sample of
// failure times. Deterministic given the stream.
inline double calibrate_tau(const SimulationScenario& sc, RngStream& rng,
                            int n_pilot = 200000) {
  std::vector<double> t;
  t.reserve(n_pilot + sc.cluster_size_max);
  while (static_cast<int>(t.size()) < n_pilot) {
    const int ni = rng.uniform_int(sc.cluster_size_min, sc.cluster_size_max);
    const double x1 = rng.normal();
    Eigen::VectorXd eps = detail::draw_errors(sc, ni, rng);
    for (int k = 0; k < ni; ++k) {
      double x2 = rng.normal();
      if (sc.contamination == Contamination::five_pct_plus5 &&
          sc.contamination_mode == ContaminationMode::before_response &&
          rng.uniform() < 0.05)
        x2 += 5.0;
      t.push_back(std::exp(sc.beta_true[0] * x1 + sc.beta_true[1] * x2 + eps[k]));
    }
  }
  // P(censored | T) = min(T / tau, 1); monotone decreasing in tau
  auto rate = [&](double tau) {
    double s = 0.0;
    for (double ti : t) s += ti >= tau ? 1.0 : ti / tau;
    return s / t.size();
  };
  double lo = 1e-9, hi = 1.0;
  while (rate(hi) > sc.censoring_target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double r = rate(mid);
    if (std::fabs(r - sc.censoring_target) <= 0.005) return mid;
    if (r > sc.censoring_target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

enum class EstimatorKind : int {
  gehan = 0,
  weighted = 1,
  weighted_robust = 2,
  smoothed_weighted_robust = 3
};

inline const char* estimator_name(int k) {
  static const char* names[] = {"gehan", "weighted", "weighted_robust",
                                "smoothed_weighted_robust"};
  return names[k];
}

constexpr int kNumEstimators = 4;

struct EstimatorCells {
  Eigen::VectorXd bias;
  Eigen::VectorXd mse;
  Eigen::VectorXd evar;  // divisor R-1
};

struct ScenarioResult {
  SimulationScenario scenario;
  double tau = 0.0;
  std::array<EstimatorCells, kNumEstimators> cells;
  Eigen::VectorXd ivar;  // mean diag(Sigma^)/N, smoothed robust estimator
  double realized_censoring = 0.0;
  int failures = 0;
  std::vector<int> outer_iterations;  // iterate_fit outer counts, by replicate
  std::array<Eigen::MatrixXd, kNumEstimators> raw_beta;  // successes x p
};

namespace detail {

struct ReplicateOutcome {
  bool ok = false;
  Eigen::Vector2d beta[kNumEstimators];
  Eigen::Vector2d ivar;
  double censoring = 0.0;
  int outer_iters = 0;
};

inline ReplicateOutcome run_replicate(const SimulationScenario& sc, double tau,
                                      std::uint64_t rep) {
  ReplicateOutcome out;
  RngStream rng(sc.seed, rep + 1);  // stream 0 is tau calibration
  ClusteredDataset data = generate_dataset(sc, tau, rng);
  int censored = 0;
  for (int ev : data.events()) censored += 1 - ev;
  out.censoring = static_cast<double>(censored) / data.num_obs();

  try {
    WeightSet unit = unit_weights(data);
    EstimatorConfig prelim_cfg;
    prelim_cfg.variant = Variant::gehan;
    prelim_cfg.smoothed = true;
    FitResult prelim = fit(data, prelim_cfg, unit);
    if (!prelim.converged) return out;
    Residuals res = compute_residuals(data, prelim.beta_hat);

    WeightSet w_corr =
        make_weights(data, res, OmegaScheme::correlation_adjusted, false);
    WeightSet w_rob =
        make_weights(data, res, OmegaScheme::correlation_adjusted, true);

    EstimatorConfig srob_cfg;
    srob_cfg.variant = Variant::weighted_robust;
    srob_cfg.beta_init = prelim.beta_hat;
    auto [srob_fit, srob_cov] = iterate_fit(data, srob_cfg, w_rob);
    if (!srob_fit.converged) return out;
    out.outer_iters = srob_fit.iterations;
    out.beta[3] = srob_fit.beta_hat;
    out.ivar = srob_cov.sigma_hat.diagonal() / data.num_clusters();

    auto nonsmooth = [&](const WeightSet& w, const Eigen::VectorXd& start) {
      EstimatorConfig cfg;
      cfg.smoothed = false;
      cfg.beta_init = start;
      return fit(data, cfg, w);
    };
    FitResult f_gehan = nonsmooth(unit, prelim.beta_hat);
    FitResult f_w = nonsmooth(w_corr, srob_fit.beta_hat);
    FitResult f_wr = nonsmooth(w_rob, srob_fit.beta_hat);
    if (!(f_gehan.converged && f_w.converged && f_wr.converged)) return out;
    out.beta[0] = f_gehan.beta_hat;
    out.beta[1] = f_w.beta_hat;
    out.beta[2] = f_wr.beta_hat;
    out.ok = true;
  } catch (const std::exception&) {
    out.ok = false;
  }
  return out;
}

}  // namespace detail

inline ScenarioResult run_scenario(const SimulationScenario& sc, int threads = 1) {
  sc.validate();
  ScenarioResult result;
  result.scenario = sc;
  {
    RngStream tau_rng(sc.seed, 0);
    result.tau = calibrate_tau(sc, tau_rng);
  }
  const int reps = sc.replications;
  std::vector<detail::ReplicateOutcome> outcomes(reps);

  if (threads <= 1) {
    for (int r = 0; r < reps; ++r)
      outcomes[r] = detail::run_replicate(sc, result.tau, r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (int r = t; r < reps; r += threads)
          outcomes[r] = detail::run_replicate(sc, result.tau, r);
      });
    }
    for (auto& th : pool) th.join();
  }

  int ok = 0;
  double cens = 0.0;
  for (const auto& o : outcomes) {
    cens += o.censoring;
    if (o.ok) ++ok;
  }
  result.realized_censoring = cens / reps;
  result.failures = reps - ok;
  if (ok == 0) throw NumericError("run_scenario: every replicate failed");

  const int p = 2;
  for (int k = 0; k < kNumEstimators; ++k) result.raw_beta[k].resize(ok, p);
  Eigen::MatrixXd ivars(ok, p);
  int r = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    for (int k = 0; k < kNumEstimators; ++k)
      result.raw_beta[k].row(r) = o.beta[k].transpose();
    ivars.row(r) = o.ivar.transpose();
    result.outer_iterations.push_back(o.outer_iters);
    ++r;
  }
  for (int k = 0; k < kNumEstimators; ++k) {
    const Eigen::MatrixXd& b = result.raw_beta[k];
    EstimatorCells& c = result.cells[k];
    Eigen::VectorXd mean = b.colwise().mean();
    c.bias = mean - sc.beta_true;
    c.mse = (b.rowwise() - sc.beta_true.transpose())
                .array()
                .square()
                .colwise()
                .mean();
    c.evar = (b.rowwise() - mean.transpose()).array().square().colwise().sum() /
             std::max(1, ok - 1);
  }
  result.ivar = ivars.colwise().mean();
  return result;
}

// --- scenario config files: flat key = value blocks under [scenario] ---

inline std::vector<SimulationScenario> parse_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
  std::vector<SimulationScenario> out;
  std::string line;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    s.erase(0, s.find_first_not_of(ws));
    s.erase(s.find_last_not_of(ws) + 1);
    return s;
  };
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line == "[scenario]") {
      out.emplace_back();
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || out.empty())
      throw std::invalid_argument("scenario file: bad line " + std::to_string(line_no));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    SimulationScenario& sc = out.back();
    if (key == "name") sc.name = val;
    else if (key == "n_clusters") sc.n_clusters = std::stoi(val);
    else if (key == "error_law") {
      if (val == "mvn") sc.error_law = ErrorLaw::mvn;
      else if (val == "mvt3") sc.error_law = ErrorLaw::mvt3;
      else throw std::invalid_argument("scenario file: unknown error_law " + val);
    } else if (key == "rho") sc.rho = std::stod(val);
    else if (key == "censoring") sc.censoring_target = std::stod(val);
    else if (key == "contamination") {
      if (val == "none") sc.contamination = Contamination::none;
      else if (val == "five_pct_plus5") sc.contamination = Contamination::five_pct_plus5;
      else throw std::invalid_argument("scenario file: unknown contamination " + val);
    } else if (key == "contamination_mode") {
      if (val == "before_response")
        sc.contamination_mode = ContaminationMode::before_response;
      else if (val == "after_response")
        sc.contamination_mode = ContaminationMode::after_response;
      else throw std::invalid_argument("scenario file: unknown contamination_mode " + val);
    } else if (key == "replications") sc.replications = std::stoi(val);
    else if (key == "seed") sc.seed = std::stoull(val);
    else if (key == "beta_true") {
      std::istringstream ss(val);
      ss >> sc.beta_true[0] >> sc.beta_true[1];
    } else {
      throw std::invalid_argument("scenario file: unknown key " + key);
    }
  }
  for (const auto& sc : out) sc.validate();
  return out;
}

// --- table rendering ---

inline void emit_tables(const std::vector<ScenarioResult>& results,
                        const std::string& out_dir) {
  {
    std::ofstream csv(out_dir + "/summary.csv");
    csv << "scenario,estimator,coefficient,bias,mse,evar,ivar,"
           "realized_censoring,failures\n";
    csv << std::setprecision(10);
    for (const auto& r : results) {
      for (int k = 0; k < kNumEstimators; ++k) {
        for (int j = 0; j < r.cells[k].bias.size(); ++j) {
          csv << r.scenario.name << ',' << estimator_name(k) << ",beta" << (j + 1)
              << ',' << r.cells[k].bias[j] << ',' << r.cells[k].mse[j] << ','
              << r.cells[k].evar[j] << ',';
          if (k == static_cast<int>(EstimatorKind::smoothed_weighted_robust))
            csv << r.ivar[j];
          csv << ',' << r.realized_censoring << ',' << r.failures << "\n";
        }
      }
    }
  }
  {
    std::ofstream md(out_dir + "/summary.md");
    md << std::fixed << std::setprecision(4);
    for (const auto& r : results) {
      md << "## " << r.scenario.name << "\n\n";
      md << "| coef | stat |";
      for (int k = 0; k < kNumEstimators; ++k) md << ' ' << estimator_name(k) << " |";
      md << "\n|---|---|";
      for (int k = 0; k < kNumEstimators; ++k) md << "---|";
      md << "\n";
      for (int j = 0; j < 2; ++j) {
        md << "| beta" << (j + 1) << " | bias |";
        for (int k = 0; k < kNumEstimators; ++k) md << ' ' << r.cells[k].bias[j] << " |";
        md << "\n| beta" << (j + 1) << " | MSE |";
        for (int k = 0; k < kNumEstimators; ++k) md << ' ' << r.cells[k].mse[j] << " |";
        md << "\n| beta" << (j + 1) << " | Evar |";
        for (int k = 0; k < kNumEstimators; ++k) md << ' ' << r.cells[k].evar[j] << " |";
        md << "\n| beta" << (j + 1) << " | Ivar |";
        for (int k = 0; k < kNumEstimators; ++k) {
          if (k == static_cast<int>(EstimatorKind::smoothed_weighted_robust))
            md << ' ' << r.ivar[j] << " |";
          else
            md << " - |";
        }
        md << "\n";
      }
      md << "\nrealized censoring " << r.realized_censoring << ", failures "
         << r.failures << ", tau " << r.tau << "\n\n";
    }
  }
  for (const auto& r : results) {
    std::ofstream raw(out_dir + "/raw_" + r.scenario.name + ".csv");
    raw << "replicate";
    for (int k = 0; k < kNumEstimators; ++k)
      raw << ',' << estimator_name(k) << "_beta1," << estimator_name(k) << "_beta2";
    raw << "\n" << std::setprecision(10);
    for (int i = 0; i < r.raw_beta[0].rows(); ++i) {
      raw << i;
      for (int k = 0; k < kNumEstimators; ++k)
        raw << ',' << r.raw_beta[k](i, 0) << ',' << r.raw_beta[k](i, 1);
      raw << "\n";
    }
  }
}

}  // namespace aftrank
