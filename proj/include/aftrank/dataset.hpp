#pragma once

// Domain types and validation for clustered right-censored survival data.
// Observations are stored flattened in cluster-major order (clusters in
// input order, members in input order); this flattening is the alignment
// contract for every downstream vector of length M.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace aftrank {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Observation {
  double log_time = 0.0;          // log of min(T, C)
  int event = 0;                  // 1 = event, 0 = censored
  Eigen::VectorXd covariates;     // length p
};

class ClusteredDataset {
 public:
  // Validates and flattens. Throws DataError naming the offending
  // (cluster, member) with 1-based indices.
  static ClusteredDataset build(const std::vector<std::vector<Observation>>& clusters,
                                std::vector<std::string> cluster_ids = {}) {
    ClusteredDataset d;
    const int n_clusters = static_cast<int>(clusters.size());
    if (n_clusters < 2) throw DataError("dataset must contain at least 2 clusters");
    int total = 0;
    int p = -1;
    for (int i = 0; i < n_clusters; ++i) {
      if (clusters[i].empty())
        throw DataError("empty cluster (i=" + std::to_string(i + 1) + ")");
      for (int k = 0; k < static_cast<int>(clusters[i].size()); ++k) {
        const Observation& o = clusters[i][k];
        const std::string at =
            " (i=" + std::to_string(i + 1) + ",k=" + std::to_string(k + 1) + ")";
        if (p < 0) p = static_cast<int>(o.covariates.size());
        if (static_cast<int>(o.covariates.size()) != p)
          throw DataError("covariate dimension mismatch" + at);
        if (!std::isfinite(o.log_time)) throw DataError("non-finite log time" + at);
        if (o.event != 0 && o.event != 1)
          throw DataError("event indicator not in {0,1}" + at);
        for (int j = 0; j < p; ++j)
          if (!std::isfinite(o.covariates[j]))
            throw DataError("non-finite covariate" + at);
      }
      total += static_cast<int>(clusters[i].size());
    }
    if (p < 1) throw DataError("covariate dimension must be >= 1");

    d.x_.resize(total, p);
    d.log_time_.resize(total);
    d.event_.resize(total);
    d.cluster_index_.resize(total);
    d.offset_.resize(n_clusters + 1);
    d.offset_[0] = 0;
    int m = 0;
    int n_events = 0;
    for (int i = 0; i < n_clusters; ++i) {
      for (const Observation& o : clusters[i]) {
        d.x_.row(m) = o.covariates.transpose();
        d.log_time_[m] = o.log_time;
        d.event_[m] = o.event;
        d.cluster_index_[m] = i;
        n_events += o.event;
        ++m;
      }
      d.offset_[i + 1] = m;
    }
    if (n_events == 0) throw DataError("zero events: every observation is censored");

    if (cluster_ids.empty()) {
      cluster_ids.reserve(n_clusters);
      for (int i = 0; i < n_clusters; ++i) cluster_ids.push_back(std::to_string(i + 1));
    } else if (static_cast<int>(cluster_ids.size()) != n_clusters) {
      throw DataError("cluster id count does not match cluster count");
    }
    d.cluster_ids_ = std::move(cluster_ids);
    return d;
  }

  int num_clusters() const { return static_cast<int>(offset_.size()) - 1; }
  int num_obs() const { return static_cast<int>(log_time_.size()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  int cluster_size(int i) const { return offset_[i + 1] - offset_[i]; }
  int cluster_begin(int i) const { return offset_[i]; }
  int cluster_end(int i) const { return offset_[i + 1]; }
  int cluster_of(int m) const { return cluster_index_[m]; }

  const Eigen::MatrixXd& covariates() const { return x_; }
  const Eigen::VectorXd& log_times() const { return log_time_; }
  const std::vector<int>& events() const { return event_; }
  const std::vector<std::string>& cluster_ids() const { return cluster_ids_; }

 private:
  Eigen::MatrixXd x_;                 // M x p
  Eigen::VectorXd log_time_;          // M
  std::vector<int> event_;            // M
  std::vector<int> cluster_index_;    // M
  std::vector<int> offset_;           // N + 1
  std::vector<std::string> cluster_ids_;
};

struct Parameters {
  Eigen::VectorXd beta;
};

struct Residuals {
  Eigen::VectorXd e;           // length M, flattening order
  Eigen::VectorXd beta_used;
};

// e_ik = log T~_ik - X_ik' beta
inline Residuals compute_residuals(const ClusteredDataset& data,
                                   const Eigen::VectorXd& beta) {
  if (beta.size() != data.dim())
    throw DataError("compute_residuals: beta length does not match covariate dimension");
  Residuals r;
  r.e = data.log_times() - data.covariates() * beta;
  r.beta_used = beta;
  return r;
}

}  // namespace aftrank
