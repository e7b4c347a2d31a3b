#pragma once

// Shared test fixtures: small random clustered datasets with controllable
// size, censoring, and tie structure.

#include <vector>

#include "aftrank/dataset.hpp"
#include "aftrank/stats.hpp"
#include "aftrank/weights.hpp"

namespace testutil {

struct RandomDatasetSpec {
  int n_clusters = 4;
  int size_min = 1;
  int size_max = 3;
  int p = 2;
  double censor_prob = 0.3;
  bool force_ties = false;
};

inline aftrank::ClusteredDataset random_dataset(const RandomDatasetSpec& spec,
                                                aftrank::RngStream& rng) {
  std::vector<std::vector<aftrank::Observation>> clusters;
  bool any_event = false;
  for (int i = 0; i < spec.n_clusters; ++i) {
    int ni = spec.size_min + static_cast<int>(rng.uniform() * (spec.size_max - spec.size_min + 1));
    if (ni > spec.size_max) ni = spec.size_max;
    std::vector<aftrank::Observation> cl(ni);
    for (auto& o : cl) {
      o.log_time = rng.normal();
      if (spec.force_ties && rng.uniform() < 0.4) o.log_time = 0.5;
      o.event = rng.uniform() < spec.censor_prob ? 0 : 1;
      any_event = any_event || o.event;
      o.covariates.resize(spec.p);
      for (int j = 0; j < spec.p; ++j) o.covariates[j] = rng.normal();
    }
    clusters.push_back(std::move(cl));
  }
  if (!any_event) clusters[0][0].event = 1;
  return aftrank::ClusteredDataset::build(clusters);
}

// Random strictly-positive weight set aligned with the dataset.
inline aftrank::WeightSet random_weights(const aftrank::ClusteredDataset& data,
                                         aftrank::RngStream& rng) {
  aftrank::WeightSet w;
  w.omega.resize(data.num_clusters());
  w.h.resize(data.num_obs());
  for (int i = 0; i < data.num_clusters(); ++i) w.omega[i] = 0.2 + rng.uniform();
  for (int m = 0; m < data.num_obs(); ++m) w.h[m] = 0.1 + 0.9 * rng.uniform();
  w.scheme = aftrank::OmegaScheme::correlation_adjusted;
  w.rho_bar = 0.0;
  return w;
}

inline Eigen::VectorXd random_vector(int p, aftrank::RngStream& rng) {
  Eigen::VectorXd v(p);
  for (int j = 0; j < p; ++j) v[j] = rng.normal();
  return v;
}

// Random symmetric positive definite matrix A A' + 0.5 I.
inline Eigen::MatrixXd random_spd(int p, aftrank::RngStream& rng) {
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p);
}

}  // namespace testutil
