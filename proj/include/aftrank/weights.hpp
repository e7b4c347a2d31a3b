#pragma once

// Within-cluster correlation weights omega_i and robust covariate (GR)
// weights h_ik, with a deterministic OGK-style robust location/scatter
// estimate behind the Mahalanobis distance.

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "aftrank/dataset.hpp"
#include "aftrank/stats.hpp"

namespace aftrank {

enum class OmegaScheme { unit, inverse_size, correlation_adjusted };

struct WeightSet {
  Eigen::VectorXd omega;   // length N
  Eigen::VectorXd h;       // length M, flattening order
  double rho_bar = 0.0;
  OmegaScheme scheme = OmegaScheme::unit;
};

inline WeightSet unit_weights(const ClusteredDataset& data) {
  WeightSet w;
  w.omega = Eigen::VectorXd::Ones(data.num_clusters());
  w.h = Eigen::VectorXd::Ones(data.num_obs());
  w.rho_bar = 0.0;
  w.scheme = OmegaScheme::unit;
  return w;
}

// Per-observation combined weight a_m = omega_{cluster(m)} * h_m.
inline Eigen::VectorXd obs_weights(const ClusteredDataset& data, const WeightSet& w) {
  Eigen::VectorXd a(data.num_obs());
  for (int m = 0; m < data.num_obs(); ++m)
    a[m] = w.omega[data.cluster_of(m)] * w.h[m];
  return a;
}

// Wang-Carey moment estimator of the average within-cluster correlation,
// computed on the midranks of the pooled residuals. Returns 0 with a
// warning if every cluster is a singleton.
inline double estimate_rho_bar(const ClusteredDataset& data, const Residuals& res) {
  const int m_total = data.num_obs();
  Eigen::VectorXd r = midranks(res.e);
  const double r_bar = 0.5 * (m_total + 1);
  double num = 0.0, den = 0.0;
  bool any_pair = false;
  for (int i = 0; i < data.num_clusters(); ++i) {
    const int b = data.cluster_begin(i), e = data.cluster_end(i);
    const int ni = e - b;
    if (ni > 1) any_pair = true;
    double sum = 0.0, sumsq = 0.0;
    for (int j = b; j < e; ++j) {
      double c = r[j] - r_bar;
      sum += c;
      sumsq += c * c;
    }
    num += sum * sum - sumsq;  // ordered pairs j != l
    den += (ni - 1) * sumsq;
  }
  if (!any_pair) {
    std::cerr << "aftrank: all clusters are singletons; rho_bar set to 0\n";
    return 0.0;
  }
  if (den == 0.0) return 0.0;
  return num / den;
}

// omega_i per scheme; rho_bar is clamped to [0, 0.99] before use.
inline Eigen::VectorXd omega_weights(const ClusteredDataset& data, double rho_bar,
                                     OmegaScheme scheme) {
  if (!std::isfinite(rho_bar))
    throw std::invalid_argument("omega_weights: rho_bar not finite");
  const double rho = std::clamp(rho_bar, 0.0, 0.99);
  Eigen::VectorXd omega(data.num_clusters());
  for (int i = 0; i < data.num_clusters(); ++i) {
    switch (scheme) {
      case OmegaScheme::unit:
        omega[i] = 1.0;
        break;
      case OmegaScheme::inverse_size:
        omega[i] = 1.0 / data.cluster_size(i);
        break;
      case OmegaScheme::correlation_adjusted:
        omega[i] = 1.0 / (1.0 + (data.cluster_size(i) - 1) * rho);
        break;
    }
  }
  return omega;
}

struct RobustScatter {
  Eigen::VectorXd center;   // length p
  Eigen::MatrixXd scatter;  // p x p, symmetric positive definite
};

namespace detail {

inline double median_inplace(std::vector<double>& v) {
  const size_t n = v.size();
  auto mid = v.begin() + n / 2;
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline double mad_scale(const Eigen::VectorXd& col, double center) {
  std::vector<double> dev(col.size());
  for (int i = 0; i < col.size(); ++i) dev[i] = std::fabs(col[i] - center);
  return 1.4826 * median_inplace(dev);
}

}  // namespace detail

// Deterministic OGK-style estimate: coordinatewise median center, pairwise
// Gnanadesikan-Kettenring covariances with MAD scale, eigen-symmetrization
// with eigenvalue floor 1e-8 * trace / p.
inline RobustScatter robust_scatter(const Eigen::MatrixXd& design) {
  const int m = static_cast<int>(design.rows());
  const int p = static_cast<int>(design.cols());
  if (m <= p) throw DataError("robust_scatter: need more rows than columns");

  RobustScatter rs;
  rs.center.resize(p);
  Eigen::VectorXd scale(p);
  for (int j = 0; j < p; ++j) {
    std::vector<double> col(design.col(j).data(), design.col(j).data() + m);
    rs.center[j] = detail::median_inplace(col);
    scale[j] = detail::mad_scale(design.col(j), rs.center[j]);
    if (scale[j] == 0.0)
      throw DataError("robust_scatter: column " + std::to_string(j + 1) +
                      " has zero MAD (constant or near-constant)");
  }

  Eigen::MatrixXd cov(p, p);
  for (int j = 0; j < p; ++j) cov(j, j) = scale[j] * scale[j];
  for (int j = 0; j < p; ++j) {
    for (int k = j + 1; k < p; ++k) {
      Eigen::VectorXd u = (design.col(j).array() - rs.center[j]) / scale[j];
      Eigen::VectorXd v = (design.col(k).array() - rs.center[k]) / scale[k];
      Eigen::VectorXd sum = u + v, dif = u - v;
      std::vector<double> sv(sum.data(), sum.data() + m);
      std::vector<double> dv(dif.data(), dif.data() + m);
      double ms = detail::median_inplace(sv);
      double md = detail::median_inplace(dv);
      double ss = detail::mad_scale(sum, ms);
      double sd = detail::mad_scale(dif, md);
      double gk = 0.25 * (ss * ss - sd * sd);  // GK identity on standardized cols
      cov(j, k) = cov(k, j) = scale[j] * scale[k] * gk;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double floor = 1e-8 * cov.trace() / p;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  rs.scatter = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  rs.scatter = 0.5 * (rs.scatter + rs.scatter.transpose().eval());
  return rs;
}

// GR weights h = min{1, (c / d^2)^(alpha/2)} with d^2 the Mahalanobis
// distance under the robust scatter; c defaults to chisq_quantile(0.95, p).
inline Eigen::VectorXd gr_weights(const Eigen::MatrixXd& design, const RobustScatter& rs,
                                  double alpha = 2.0, double c = -1.0) {
  const int p = static_cast<int>(design.cols());
  if (c <= 0.0) c = chisq_quantile(0.95, p);
  Eigen::LLT<Eigen::MatrixXd> llt(rs.scatter);
  if (llt.info() != Eigen::Success)
    throw DataError("gr_weights: scatter matrix is not positive definite");
  Eigen::VectorXd h(design.rows());
  for (int m = 0; m < design.rows(); ++m) {
    Eigen::VectorXd d = design.row(m).transpose() - rs.center;
    double d2 = d.dot(llt.solve(d));
    h[m] = d2 <= c ? 1.0 : std::pow(c / d2, 0.5 * alpha);
  }
  return h;
}

// Full weight construction: rho_bar from residuals at a preliminary fit,
// omega per scheme, h from the robust scatter of the design (or all ones).
inline WeightSet make_weights(const ClusteredDataset& data, const Residuals& preliminary,
                              OmegaScheme scheme, bool robust_h, double alpha = 2.0,
                              double c = -1.0) {
  WeightSet w;
  w.scheme = scheme;
  w.rho_bar = scheme == OmegaScheme::correlation_adjusted
                  ? estimate_rho_bar(data, preliminary)
                  : 0.0;
  w.omega = omega_weights(data, w.rho_bar, scheme);
  if (robust_h) {
    RobustScatter rs = robust_scatter(data.covariates());
    w.h = gr_weights(data.covariates(), rs, alpha, c);
  } else {
    w.h = Eigen::VectorXd::Ones(data.num_obs());
  }
  return w;
}

}  // namespace aftrank
