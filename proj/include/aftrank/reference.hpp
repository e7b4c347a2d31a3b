#pragma once

// Straightforward reference implementations of every estimating quantity,
// written as literal nested loops over clusters and members with no shared
// machinery with the production paths. These exist only for verification
// (the `verify` CLI subcommand and the test oracles); they are O(M^2) to
// O(M^3) and should never be used for fitting.

#include <cmath>

#include <Eigen/Core>

#include "aftrank/dataset.hpp"
#include "aftrank/weights.hpp"

namespace aftrank::reference {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0));
}

inline Eigen::VectorXd score_nonsmooth(const ClusteredDataset& d, const WeightSet& w,
                                       const Eigen::VectorXd& beta) {
  const int n = d.num_clusters();
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(d.dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k)
        for (int l = d.cluster_begin(j); l < d.cluster_end(j); ++l) {
          if (!d.events()[k]) continue;
          if (e[k] - e[l] <= 0.0)
            s += w.omega[i] * w.omega[j] * w.h[k] * w.h[l] *
                 (d.covariates().row(k) - d.covariates().row(l)).transpose();
        }
  return s / (static_cast<double>(n) * n);
}

inline double objective_nonsmooth(const ClusteredDataset& d, const WeightSet& w,
                                  const Eigen::VectorXd& beta) {
  const int n = d.num_clusters();
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  double obj = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k)
        for (int l = d.cluster_begin(j); l < d.cluster_end(j); ++l) {
          if (!d.events()[k]) continue;
          double diff = e[k] - e[l];
          if (diff < 0.0)
            obj += w.omega[i] * w.omega[j] * w.h[k] * w.h[l] * (-diff);
        }
  return obj / (static_cast<double>(n) * n);
}

inline Eigen::VectorXd score_smoothed(const ClusteredDataset& d, const WeightSet& w,
                                      const Eigen::VectorXd& beta,
                                      const Eigen::MatrixXd& gamma_sq) {
  const int n = d.num_clusters();
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(d.dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k)
        for (int l = d.cluster_begin(j); l < d.cluster_end(j); ++l) {
          if (!d.events()[k]) continue;
          Eigen::VectorXd diff =
              (d.covariates().row(k) - d.covariates().row(l)).transpose();
          double r2 = diff.dot(gamma_sq * diff);
          if (r2 <= 0.0) continue;
          double t = std::sqrt(static_cast<double>(n)) * (e[l] - e[k]) / std::sqrt(r2);
          s += w.omega[i] * w.omega[j] * w.h[k] * w.h[l] * norm_cdf(t) * diff;
        }
  return s / (static_cast<double>(n) * n);
}

inline double objective_smoothed(const ClusteredDataset& d, const WeightSet& w,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::MatrixXd& gamma_sq) {
  const int n = d.num_clusters();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  double obj = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k)
        for (int l = d.cluster_begin(j); l < d.cluster_end(j); ++l) {
          if (!d.events()[k]) continue;
          double ww = w.omega[i] * w.omega[j] * w.h[k] * w.h[l];
          double u = e[l] - e[k];
          Eigen::VectorXd diff =
              (d.covariates().row(k) - d.covariates().row(l)).transpose();
          double r2 = diff.dot(gamma_sq * diff);
          if (r2 <= 0.0) {
            if (u > 0.0) obj += ww * u;
            continue;
          }
          double r = std::sqrt(r2);
          double t = sqrt_n * u / r;
          obj += ww * (u * norm_cdf(t) + (r / sqrt_n) * norm_pdf(t));
        }
  return obj / (static_cast<double>(n) * n);
}

inline Eigen::MatrixXd jacobian_smoothed(const ClusteredDataset& d, const WeightSet& w,
                                         const Eigen::VectorXd& beta,
                                         const Eigen::MatrixXd& gamma_sq) {
  const int n = d.num_clusters();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(d.dim(), d.dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k)
        for (int l = d.cluster_begin(j); l < d.cluster_end(j); ++l) {
          if (!d.events()[k]) continue;
          Eigen::VectorXd diff =
              (d.covariates().row(k) - d.covariates().row(l)).transpose();
          double r2 = diff.dot(gamma_sq * diff);
          if (r2 <= 0.0) continue;
          double r = std::sqrt(r2);
          double t = sqrt_n * (e[l] - e[k]) / r;
          jac += w.omega[i] * w.omega[j] * w.h[k] * w.h[l] * sqrt_n *
                 norm_pdf(t) / r * (diff * diff.transpose());
        }
  return jac / (static_cast<double>(n) * n);
}

inline Eigen::VectorXd z_term(const ClusteredDataset& d, const WeightSet& w,
                              const Eigen::VectorXd& beta, int target, int pivot) {
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  Eigen::VectorXd num = Eigen::VectorXd::Zero(d.dim());
  int cnt = 0;
  for (int r = 0; r < d.num_clusters(); ++r)
    for (int s = d.cluster_begin(r); s < d.cluster_end(r); ++s) {
      if (e[s] >= e[pivot]) {
        num += w.omega[r] * w.h[s] *
               (d.covariates().row(target) - d.covariates().row(s)).transpose();
        ++cnt;
      }
    }
  return num / cnt;
}

inline Eigen::MatrixXd xi_terms(const ClusteredDataset& d, const WeightSet& w,
                                const Eigen::VectorXd& beta) {
  const int n = d.num_clusters();
  Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(d.num_obs(), d.dim());
  for (int i = 0; i < n; ++i)
    for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(d.dim());
      for (int j = 0; j < n; ++j)
        for (int f = d.cluster_begin(j); f < d.cluster_end(j); ++f) {
          Eigen::VectorXd first = Eigen::VectorXd::Zero(d.dim());
          if (d.events()[k] && e[k] < e[f])
            first = (w.h[f] / n) *
                    (d.covariates().row(k) - d.covariates().row(f)).transpose();
          Eigen::VectorXd second = Eigen::VectorXd::Zero(d.dim());
          if (d.events()[f] && e[k] >= e[f])
            second = (1.0 / n) * z_term(d, w, beta, k, f);
          row += w.omega[j] * (first - second);
        }
      xi.row(k) = row.transpose();
    }
  return xi;
}

inline Eigen::MatrixXd v_hat(const ClusteredDataset& d, const WeightSet& w,
                             const Eigen::VectorXd& beta) {
  const int n = d.num_clusters();
  Eigen::MatrixXd xi = xi_terms(d, w, beta);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(d.dim(), d.dim());
  for (int i = 0; i < n; ++i)
    for (int k = d.cluster_begin(i); k < d.cluster_end(i); ++k)
      for (int l = d.cluster_begin(i); l < d.cluster_end(i); ++l)
        v += w.omega[i] * w.omega[i] * w.h[k] * w.h[l] *
             (xi.row(k).transpose() * xi.row(l));
  return v / n;
}

}  // namespace aftrank::reference
