#pragma once

// Gehan-type rank estimating functions for the clustered AFT model:
// nonsmooth score/objective, induced-smoothed score/objective/Jacobian,
// and the solvers (damped Newton on the smoothed score, Nelder-Mead on
// the nonsmooth objective).
//
// Conventions, fixed project-wide:
//   - pair indicator is I(e_ik <= e_jl), smoothed as Phi(sqrt(N)(e_jl - e_ik)/r);
//   - r^2 = d' Gamma^2 d with d = X_ik - X_jl, and Gamma^2 is stored directly;
//   - every sum carries the N^{-2} scaling as printed.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "aftrank/dataset.hpp"
#include "aftrank/stats.hpp"
#include "aftrank/weights.hpp"

namespace aftrank {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PairSum { fast, naive };

namespace detail {

// Suffix aggregates over residual-sorted observations. For each m:
//   ge_w[m]  = sum of a_j over e_j >= e_m (ties included)
//   ge_wx[m] = matching weighted covariate sum
//   gt_w[m], gt_we[m] = strict versions (e_j > e_m), with a_j e_j sums.
struct RankSums {
  Eigen::VectorXd ge_w, gt_w, gt_we;
  Eigen::MatrixXd ge_wx;  // M x p
};

inline RankSums rank_suffix_sums(const Eigen::VectorXd& e, const Eigen::VectorXd& a,
                                 const Eigen::MatrixXd& x) {
  const int m_total = static_cast<int>(e.size());
  const int p = static_cast<int>(x.cols());
  std::vector<int> idx(m_total);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int u, int v) { return e[u] < e[v]; });

  RankSums rs;
  rs.ge_w.resize(m_total);
  rs.gt_w.resize(m_total);
  rs.gt_we.resize(m_total);
  rs.ge_wx.resize(m_total, p);

  double run_w = 0.0, run_we = 0.0;
  Eigen::RowVectorXd run_wx = Eigen::RowVectorXd::Zero(p);
  int hi = m_total - 1;
  while (hi >= 0) {
    int lo = hi;
    while (lo - 1 >= 0 && e[idx[lo - 1]] == e[idx[hi]]) --lo;
    // strict sums exclude the tie group [lo, hi]
    for (int t = lo; t <= hi; ++t) {
      rs.gt_w[idx[t]] = run_w;
      rs.gt_we[idx[t]] = run_we;
    }
    for (int t = lo; t <= hi; ++t) {
      const int j = idx[t];
      run_w += a[j];
      run_we += a[j] * e[j];
      run_wx += a[j] * x.row(j);
    }
    for (int t = lo; t <= hi; ++t) {
      rs.ge_w[idx[t]] = run_w;
      rs.ge_wx.row(idx[t]) = run_wx;
    }
    hi = lo - 1;
  }
  return rs;
}

}  // namespace detail

// S_wh(beta): N^{-2} sum over ordered pairs of
//   a_ik a_jl Delta_ik (X_ik - X_jl) I(e_ik <= e_jl).
inline Eigen::VectorXd score_nonsmooth(const ClusteredDataset& data, const WeightSet& w,
                                       const Eigen::VectorXd& beta,
                                       PairSum method = PairSum::fast) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const int p = data.dim();
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
  if (method == PairSum::fast) {
    detail::RankSums rs = detail::rank_suffix_sums(e, a, x);
    for (int m = 0; m < m_total; ++m) {
      if (!data.events()[m]) continue;
      s += a[m] * (rs.ge_w[m] * x.row(m) - rs.ge_wx.row(m)).transpose();
    }
  } else {
    for (int m = 0; m < m_total; ++m) {
      if (!data.events()[m]) continue;
      for (int j = 0; j < m_total; ++j) {
        if (e[m] <= e[j])
          s += a[m] * a[j] * (x.row(m) - x.row(j)).transpose();
      }
    }
  }
  return s / (static_cast<double>(n) * n);
}

// L_wh(beta): N^{-2} sum of a_ik a_jl Delta_ik (e_ik - e_jl)^-.
inline double objective_nonsmooth(const ClusteredDataset& data, const WeightSet& w,
                                  const Eigen::VectorXd& beta,
                                  PairSum method = PairSum::fast) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  double obj = 0.0;
  if (method == PairSum::fast) {
    detail::RankSums rs = detail::rank_suffix_sums(e, a, data.covariates());
    for (int m = 0; m < m_total; ++m) {
      if (!data.events()[m]) continue;
      obj += a[m] * (rs.gt_we[m] - e[m] * rs.gt_w[m]);
    }
  } else {
    for (int m = 0; m < m_total; ++m) {
      if (!data.events()[m]) continue;
      for (int j = 0; j < m_total; ++j) {
        if (e[j] > e[m]) obj += a[m] * a[j] * (e[j] - e[m]);
      }
    }
  }
  return obj / (static_cast<double>(n) * n);
}

namespace detail {

// Phi / phi arguments beyond this are indistinguishable from 0/1 at
// double precision for our tolerances.
constexpr double kTailCut = 9.0;

}  // namespace detail

// Smoothed score: indicator replaced by Phi(sqrt(N)(e_jl - e_ik)/r_ikjl).
// Pairs with coincident covariates (r = 0) contribute 0.
inline Eigen::VectorXd score_smoothed(const ClusteredDataset& data, const WeightSet& w,
                                      const Eigen::VectorXd& beta,
                                      const Eigen::MatrixXd& gamma_sq) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const int p = data.dim();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd d(p);
  for (int m = 0; m < m_total; ++m) {
    if (!data.events()[m]) continue;
    for (int j = 0; j < m_total; ++j) {
      d = (x.row(m) - x.row(j)).transpose();
      const double r2 = d.dot(gamma_sq * d);
      if (r2 <= 0.0) continue;
      const double t = sqrt_n * (e[j] - e[m]) / std::sqrt(r2);
      if (t < -detail::kTailCut) continue;
      const double phi_t = t > detail::kTailCut ? 1.0 : std_normal_cdf(t);
      s += (a[m] * a[j] * phi_t) * d;
    }
  }
  return s / (static_cast<double>(n) * n);
}

// Smoothed objective L~_wh; its gradient is the smoothed score.
inline double objective_smoothed(const ClusteredDataset& data, const WeightSet& w,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::MatrixXd& gamma_sq) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();
  double obj = 0.0;
  Eigen::VectorXd d(data.dim());
  for (int m = 0; m < m_total; ++m) {
    if (!data.events()[m]) continue;
    for (int j = 0; j < m_total; ++j) {
      const double u = e[j] - e[m];
      d = (x.row(m) - x.row(j)).transpose();
      const double r2 = d.dot(gamma_sq * d);
      if (r2 <= 0.0) {
        if (u > 0.0) obj += a[m] * a[j] * u;  // nonsmooth limit
        continue;
      }
      const double r = std::sqrt(r2);
      const double t = sqrt_n * u / r;
      if (t < -detail::kTailCut) continue;
      if (t > detail::kTailCut) {
        obj += a[m] * a[j] * u;
        continue;
      }
      obj += a[m] * a[j] * (u * std_normal_cdf(t) + (r / sqrt_n) * std_normal_pdf(t));
    }
  }
  return obj / (static_cast<double>(n) * n);
}

// dS~/dbeta: N^{-2} sum of a_ik a_jl Delta_ik sqrt(N) d d' / r * phi(t).
// Symmetric positive semidefinite by construction.
inline Eigen::MatrixXd jacobian_smoothed(const ClusteredDataset& data, const WeightSet& w,
                                         const Eigen::VectorXd& beta,
                                         const Eigen::MatrixXd& gamma_sq) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const int p = data.dim();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd d(p);
  for (int m = 0; m < m_total; ++m) {
    if (!data.events()[m]) continue;
    for (int j = 0; j < m_total; ++j) {
      d = (x.row(m) - x.row(j)).transpose();
      const double r2 = d.dot(gamma_sq * d);
      if (r2 <= 0.0) continue;
      const double r = std::sqrt(r2);
      const double t = sqrt_n * (e[j] - e[m]) / r;
      if (std::fabs(t) > detail::kTailCut) continue;
      const double c = a[m] * a[j] * sqrt_n * std_normal_pdf(t) / r;
      jac.noalias() += c * (d * d.transpose());
    }
  }
  return jac / (static_cast<double>(n) * n);
}

// One pass computing the smoothed score and Jacobian together.
inline void score_and_jacobian_smoothed(const ClusteredDataset& data, const WeightSet& w,
                                        const Eigen::VectorXd& beta,
                                        const Eigen::MatrixXd& gamma_sq,
                                        Eigen::VectorXd& score_out,
                                        Eigen::MatrixXd& jac_out) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const int p = data.dim();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();
  score_out = Eigen::VectorXd::Zero(p);
  jac_out = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd d(p);
  for (int m = 0; m < m_total; ++m) {
    if (!data.events()[m]) continue;
    for (int j = 0; j < m_total; ++j) {
      d = (x.row(m) - x.row(j)).transpose();
      const double r2 = d.dot(gamma_sq * d);
      if (r2 <= 0.0) continue;
      const double r = std::sqrt(r2);
      const double t = sqrt_n * (e[j] - e[m]) / r;
      if (t < -detail::kTailCut) continue;
      const double am_aj = a[m] * a[j];
      if (t > detail::kTailCut) {
        score_out += am_aj * d;
        continue;
      }
      score_out += (am_aj * std_normal_cdf(t)) * d;
      jac_out.noalias() += (am_aj * sqrt_n * std_normal_pdf(t) / r) * (d * d.transpose());
    }
  }
  const double scale = 1.0 / (static_cast<double>(n) * n);
  score_out *= scale;
  jac_out *= scale;
}

enum class Variant { gehan, weighted, weighted_robust };

struct EstimatorConfig {
  Variant variant = Variant::weighted_robust;
  bool smoothed = true;
  double newton_tol = 1e-8;       // on |S~|_inf
  int max_newton_iters = 100;
  double neldermead_tol = 1e-10;  // on simplex objective spread
  int max_nm_iters = 2000;
  Eigen::MatrixXd gamma_init;     // empty => identity
  Eigen::VectorXd beta_init;      // empty => OLS on uncensored rows
};

struct FitResult {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd gamma_sq;   // smoothed fits only
  double score_norm = 0.0;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  WeightSet weights;
};

// Deterministic initial value: least squares of log time on X over the
// uncensored rows.
inline Eigen::VectorXd ols_on_events(const ClusteredDataset& data) {
  int n_ev = 0;
  for (int m = 0; m < data.num_obs(); ++m) n_ev += data.events()[m];
  Eigen::MatrixXd x(n_ev, data.dim());
  Eigen::VectorXd y(n_ev);
  int r = 0;
  for (int m = 0; m < data.num_obs(); ++m) {
    if (!data.events()[m]) continue;
    x.row(r) = data.covariates().row(m);
    y[r] = data.log_times()[m];
    ++r;
  }
  return x.colPivHouseholderQr().solve(y);
}

namespace detail {

struct NewtonResult {
  Eigen::VectorXd beta;
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton on S~ = 0: step halving until the score norm decreases,
// Levenberg ridge when the Jacobian is near-singular.
inline NewtonResult solve_smoothed(const ClusteredDataset& data, const WeightSet& w,
                                   const Eigen::VectorXd& beta0,
                                   const Eigen::MatrixXd& gamma_sq, double tol,
                                   int max_iters) {
  const int p = data.dim();
  NewtonResult res;
  res.beta = beta0;
  Eigen::VectorXd s(p);
  Eigen::MatrixXd jac(p, p);
  score_and_jacobian_smoothed(data, w, res.beta, gamma_sq, s, jac);
  double norm = s.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < max_iters; ++it) {
    if (norm <= tol) {
      res.converged = true;
      break;
    }
    res.iterations = it + 1;
    Eigen::MatrixXd jr = jac;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jr);
    const double tr = jr.trace();
    const double min_ev = es.eigenvalues().minCoeff();
    if (!(tr > 0.0))
      throw NumericError("solve_smoothed: zero Jacobian (no informative pairs)");
    if (min_ev < 1e-10 * tr) jr += (1e-10 * tr - min_ev + 1e-8 * tr / p) *
                                   Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd step = jr.ldlt().solve(s);
    if (!step.allFinite())
      throw NumericError("solve_smoothed: singular Jacobian after ridging");
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd cand = res.beta - step;
      Eigen::VectorXd s_cand = score_smoothed(data, w, cand, gamma_sq);
      double n_cand = s_cand.lpNorm<Eigen::Infinity>();
      if (n_cand < norm) {
        res.beta = cand;
        norm = n_cand;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;  // stuck; converged flag reflects the tolerance
    score_and_jacobian_smoothed(data, w, res.beta, gamma_sq, s, jac);
    norm = s.lpNorm<Eigen::Infinity>();
  }
  res.converged = res.converged || norm <= tol;
  res.score_norm = norm;
  return res;
}

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

template <typename F>
NelderMeadResult nelder_mead(F&& f, const Eigen::VectorXd& start, double tol,
                             int max_iters) {
  const int p = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> v(p + 1, start);
  std::vector<double> fv(p + 1);
  for (int j = 0; j < p; ++j) v[j + 1][j] += 0.1 * (1.0 + std::fabs(start[j]));
  for (int j = 0; j <= p; ++j) fv[j] = f(v[j]);

  NelderMeadResult res;
  auto order = [&] {
    std::vector<int> idx(p + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> v2(p + 1);
    std::vector<double> f2(p + 1);
    for (int j = 0; j <= p; ++j) {
      v2[j] = v[idx[j]];
      f2[j] = fv[idx[j]];
    }
    v.swap(v2);
    fv.swap(f2);
  };

  for (int it = 0; it < max_iters; ++it) {
    order();
    res.iterations = it + 1;
    if (fv[p] - fv[0] <= tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) centroid += v[j];
    centroid /= p;
    Eigen::VectorXd xr = centroid + (centroid - v[p]);
    double fr = f(xr);
    if (fr < fv[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - v[p]);
      double fe = f(xe);
      if (fe < fr) {
        v[p] = xe;
        fv[p] = fe;
      } else {
        v[p] = xr;
        fv[p] = fr;
      }
    } else if (fr < fv[p - 1]) {
      v[p] = xr;
      fv[p] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (v[p] - centroid);
      double fc = f(xc);
      if (fc < fv[p]) {
        v[p] = xc;
        fv[p] = fc;
      } else {
        for (int j = 1; j <= p; ++j) {
          v[j] = v[0] + 0.5 * (v[j] - v[0]);
          fv[j] = f(v[j]);
        }
      }
    }
  }
  order();
  res.x = v[0];
  res.value = fv[0];
  return res;
}

}  // namespace detail

// Fits beta for the given weights. Smoothed path: damped Newton on
// S~ = 0 at fixed Gamma^2. Nonsmooth path: Nelder-Mead on L_wh started
// from the smoothed solution.
inline FitResult fit(const ClusteredDataset& data, const EstimatorConfig& config,
                     const WeightSet& weights) {
  const int p = data.dim();
  FitResult out;
  out.weights = weights;
  Eigen::MatrixXd gamma_sq = config.gamma_init.size() > 0
                                 ? config.gamma_init
                                 : Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd beta0 =
      config.beta_init.size() > 0 ? config.beta_init : ols_on_events(data);

  detail::NewtonResult nr = detail::solve_smoothed(data, weights, beta0, gamma_sq,
                                                   config.newton_tol,
                                                   config.max_newton_iters);
  if (config.smoothed) {
    out.beta_hat = nr.beta;
    out.gamma_sq = gamma_sq;
    out.score_norm = nr.score_norm;
    out.objective = objective_smoothed(data, weights, nr.beta, gamma_sq);
    out.iterations = nr.iterations;
    out.converged = nr.converged;
    return out;
  }

  auto obj = [&](const Eigen::VectorXd& b) {
    return objective_nonsmooth(data, weights, b);
  };
  detail::NelderMeadResult nm =
      detail::nelder_mead(obj, nr.beta, config.neldermead_tol, config.max_nm_iters);
  out.beta_hat = nm.x;
  out.score_norm =
      score_nonsmooth(data, weights, nm.x).lpNorm<Eigen::Infinity>();
  out.objective = nm.value;
  out.iterations = nm.iterations;
  out.converged = nm.converged;
  return out;
}

}  // namespace aftrank
