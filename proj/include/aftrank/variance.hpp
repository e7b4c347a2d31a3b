#pragma once

// Sandwich covariance of the fitted coefficients and the Gamma-update
// iteration that jointly produces the smoothed estimate and its
// covariance. The influence terms xi/z are computed with risk-set
// prefix sums over the sorted residuals (O(M log M + M p)); the naive
// enumeration lives in the reference module used by the tests.

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "aftrank/dataset.hpp"
#include "aftrank/estimator.hpp"
#include "aftrank/weights.hpp"

namespace aftrank {

// z term for one (target, pivot) pair: weighted risk-set covariate
// difference over the unweighted risk-set count, risk set e >= e_pivot.
inline Eigen::VectorXd z_term(const ClusteredDataset& data, const WeightSet& w,
                              const Eigen::VectorXd& beta, int target, int pivot) {
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(data.dim());
  int cnt = 0;
  for (int r = 0; r < data.num_obs(); ++r) {
    if (e[r] >= e[pivot]) {
      num += a[r] * (x.row(target) - x.row(r)).transpose();
      ++cnt;
    }
  }
  // the pivot itself is always in its own risk set
  return num / cnt;
}

// xi_ik(beta) for every observation, as an M x p matrix.
inline Eigen::MatrixXd xi_terms(const ClusteredDataset& data, const WeightSet& w,
                                const Eigen::VectorXd& beta) {
  const int n = data.num_clusters();
  const int m_total = data.num_obs();
  const int p = data.dim();
  const Eigen::VectorXd e = data.log_times() - data.covariates() * beta;
  const Eigen::VectorXd a = obs_weights(data, w);
  const Eigen::MatrixXd& x = data.covariates();

  std::vector<int> idx(m_total);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int u, int v) { return e[u] < e[v]; });

  // Descending pass: risk-set aggregates per pivot (ties inclusive for >=,
  // strict sums for the first xi term's I(e_ik < e_jf)).
  Eigen::VectorXd ge_w(m_total), gt_w(m_total);
  Eigen::VectorXd ge_cnt(m_total);
  Eigen::MatrixXd ge_wx(m_total, p), gt_wx(m_total, p);
  {
    double run_w = 0.0;
    int run_cnt = 0;
    Eigen::RowVectorXd run_wx = Eigen::RowVectorXd::Zero(p);
    int hi = m_total - 1;
    while (hi >= 0) {
      int lo = hi;
      while (lo - 1 >= 0 && e[idx[lo - 1]] == e[idx[hi]]) --lo;
      for (int t = lo; t <= hi; ++t) {
        gt_w[idx[t]] = run_w;
        gt_wx.row(idx[t]) = run_wx;
      }
      for (int t = lo; t <= hi; ++t) {
        const int j = idx[t];
        run_w += a[j];
        run_wx += a[j] * x.row(j);
        ++run_cnt;
      }
      for (int t = lo; t <= hi; ++t) {
        ge_w[idx[t]] = run_w;
        ge_wx.row(idx[t]) = run_wx;
        ge_cnt[idx[t]] = run_cnt;
      }
      hi = lo - 1;
    }
  }

  // Ascending pass: prefix sums over pivots with e_jf <= e_ik of
  // omega_j Delta_jf * (risk-set mean pieces of z).
  Eigen::VectorXd le_p(m_total);
  Eigen::MatrixXd le_q(m_total, p);
  {
    double run_p = 0.0;
    Eigen::RowVectorXd run_q = Eigen::RowVectorXd::Zero(p);
    int lo = 0;
    while (lo < m_total) {
      int hi = lo;
      while (hi + 1 < m_total && e[idx[hi + 1]] == e[idx[lo]]) ++hi;
      for (int t = lo; t <= hi; ++t) {
        const int q = idx[t];
        if (data.events()[q]) {
          const double wj = w.omega[data.cluster_of(q)];
          run_p += wj * ge_w[q] / ge_cnt[q];
          run_q += (wj / ge_cnt[q]) * ge_wx.row(q);
        }
      }
      for (int t = lo; t <= hi; ++t) {
        le_p[idx[t]] = run_p;
        le_q.row(idx[t]) = run_q;
      }
      lo = hi + 1;
    }
  }

  Eigen::MatrixXd xi(m_total, p);
  for (int m = 0; m < m_total; ++m) {
    Eigen::RowVectorXd first = Eigen::RowVectorXd::Zero(p);
    if (data.events()[m]) first = (x.row(m) * gt_w[m] - gt_wx.row(m)) / n;
    Eigen::RowVectorXd second = (x.row(m) * le_p[m] - le_q.row(m)) / n;
    xi.row(m) = first - second;
  }
  return xi;
}

// V_wh hat: within-cluster cross products of the weighted xi rows.
inline Eigen::MatrixXd v_hat(const ClusteredDataset& data, const WeightSet& w,
                             const Eigen::VectorXd& beta) {
  const int p = data.dim();
  const Eigen::MatrixXd xi = xi_terms(data, w, beta);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < data.num_clusters(); ++i) {
    Eigen::VectorXd cs = Eigen::VectorXd::Zero(p);
    for (int m = data.cluster_begin(i); m < data.cluster_end(i); ++m)
      cs += w.h[m] * xi.row(m).transpose();
    v.noalias() += (w.omega[i] * w.omega[i]) * (cs * cs.transpose());
  }
  v /= data.num_clusters();
  v = 0.5 * (v + v.transpose().eval());
  // floor negative eigenvalues at 0 (roundoff only; v is PSD by construction)
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  if (es.eigenvalues().minCoeff() < 0.0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    v = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
  return v;
}

struct SandwichResult {
  Eigen::MatrixXd v_hat;       // middle matrix
  Eigen::MatrixXd d_matrix;    // smoothed Jacobian at beta_hat
  Eigen::MatrixXd sigma_hat;   // D^{-1} V D^{-1}
  Eigen::VectorXd std_errors;  // sqrt(diag(sigma_hat) / N)
};

inline SandwichResult sandwich(const ClusteredDataset& data, const WeightSet& w,
                               const Eigen::VectorXd& beta,
                               const Eigen::MatrixXd& gamma_sq) {
  const int p = data.dim();
  SandwichResult sr;
  sr.d_matrix = jacobian_smoothed(data, w, beta, gamma_sq);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sr.d_matrix);
  if (!(es.eigenvalues().minCoeff() > 1e-12 * sr.d_matrix.trace()))
    throw NumericError("sandwich: smoothed Jacobian is numerically singular");
  sr.v_hat = v_hat(data, w, beta);
  Eigen::MatrixXd d_inv = es.eigenvectors() *
                          es.eigenvalues().cwiseInverse().asDiagonal() *
                          es.eigenvectors().transpose();
  sr.sigma_hat = d_inv * sr.v_hat * d_inv;
  sr.sigma_hat = 0.5 * (sr.sigma_hat + sr.sigma_hat.transpose().eval());
  sr.std_errors =
      (sr.sigma_hat.diagonal().cwiseMax(0.0) / data.num_clusters()).cwiseSqrt();
  return sr;
}

inline SandwichResult sandwich(const ClusteredDataset& data, const WeightSet& w,
                               const FitResult& fit) {
  return sandwich(data, w, fit.beta_hat, fit.gamma_sq);
}

namespace detail {

// Symmetrize and raise eigenvalues below 1e-8 * trace / p to that floor.
inline Eigen::MatrixXd floor_spd(const Eigen::MatrixXd& m) {
  const int p = static_cast<int>(m.rows());
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  double tr = sym.trace();
  if (!(tr > 0.0)) tr = 1.0;
  const double floor = 1e-8 * tr / p;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Joint iteration: alternate a Newton solve of S~(beta; Gamma) = 0 with the
// update Gamma^2 <- floored D~^{-1} V^ D~^{-1}, until both beta and Gamma^2
// stabilize or 25 outer iterations pass.
inline std::pair<FitResult, SandwichResult> iterate_fit(const ClusteredDataset& data,
                                                        const EstimatorConfig& config,
                                                        const WeightSet& weights) {
  const int p = data.dim();
  Eigen::MatrixXd gamma_sq = config.gamma_init.size() > 0
                                 ? config.gamma_init
                                 : Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd beta =
      config.beta_init.size() > 0 ? config.beta_init : ols_on_events(data);

  FitResult out;
  out.weights = weights;
  bool converged = false;
  int outer = 0;
  double score_norm = 0.0;
  for (; outer < 25; ++outer) {
    detail::NewtonResult nr = detail::solve_smoothed(
        data, weights, beta, gamma_sq, config.newton_tol, config.max_newton_iters);
    score_norm = nr.score_norm;
    SandwichResult sr = sandwich(data, weights, nr.beta, gamma_sq);
    Eigen::MatrixXd gamma_new = detail::floor_spd(sr.sigma_hat);
    const double dbeta = (nr.beta - beta).lpNorm<Eigen::Infinity>();
    const double dgamma = (gamma_new - gamma_sq).lpNorm<Eigen::Infinity>();
    beta = nr.beta;
    gamma_sq = gamma_new;
    if (dbeta <= 1e-6 && dgamma <= 1e-4) {
      converged = true;
      ++outer;
      break;
    }
  }
  out.beta_hat = beta;
  out.gamma_sq = gamma_sq;
  out.score_norm = score_norm;
  out.objective = objective_smoothed(data, weights, beta, gamma_sq);
  out.iterations = outer;
  out.converged = converged;
  SandwichResult final_sr = sandwich(data, weights, beta, gamma_sq);
  return {out, final_sr};
}

}  // namespace aftrank
