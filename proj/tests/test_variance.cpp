#include "doctest.h"

#include <cmath>

#include "aftrank/reference.hpp"
#include "aftrank/simulation.hpp"
#include "aftrank/variance.hpp"
#include "helpers.hpp"

using namespace aftrank;

namespace {

ClusteredDataset two_singletons() {
  Observation o1, o2;
  o1.log_time = 0.0;
  o1.event = 1;
  o1.covariates = Eigen::VectorXd(2);
  o1.covariates << 1.0, -1.0;
  o2.log_time = 1.0;
  o2.event = 1;
  o2.covariates = Eigen::VectorXd(2);
  o2.covariates << 0.5, 2.0;
  return ClusteredDataset::build({{o1}, {o2}});
}

}  // namespace

TEST_CASE("z term: unique-maximum pivot reduces to a single difference") {
  auto d = two_singletons();
  WeightSet w = unit_weights(d);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(2);
  // pivot = obs 2 has the largest residual; its risk set is itself only
  Eigen::VectorXd z = z_term(d, w, beta, 0, 1);
  Eigen::VectorXd expect =
      (d.covariates().row(0) - d.covariates().row(1)).transpose();
  CHECK(z.isApprox(expect, 1e-14));
  CHECK(z.isApprox(reference::z_term(d, w, beta, 0, 1), 1e-14));
}

TEST_CASE("z term vanishes when all covariates coincide") {
  Observation o;
  o.event = 1;
  o.covariates = Eigen::VectorXd(2);
  o.covariates << 1.0, 2.0;
  std::vector<std::vector<Observation>> cl;
  for (int i = 0; i < 3; ++i) {
    o.log_time = 0.3 * i;
    cl.push_back({o});
  }
  auto d = ClusteredDataset::build(cl);
  WeightSet w = unit_weights(d);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(2);
  for (int t = 0; t < 3; ++t)
    for (int pv = 0; pv < 3; ++pv)
      CHECK(z_term(d, w, beta, t, pv).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("influence terms on two ordered singleton events") {
  auto d = two_singletons();
  WeightSet w = unit_weights(d);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd xi = xi_terms(d, w, beta);
  Eigen::RowVectorXd expect =
      0.25 * (d.covariates().row(0) - d.covariates().row(1));
  CHECK(xi.row(0).isApprox(expect, 1e-14));
  CHECK(xi.row(1).isApprox(expect, 1e-14));
}

TEST_CASE("censored observations only carry the compensator part") {
  RngStream rng(801);
  testutil::RandomDatasetSpec spec;
  spec.n_clusters = 6;
  spec.size_max = 3;
  spec.censor_prob = 0.5;
  auto d = testutil::random_dataset(spec, rng);
  WeightSet w = testutil::random_weights(d, rng);
  Eigen::VectorXd beta = testutil::random_vector(d.dim(), rng);
  Eigen::MatrixXd xi = xi_terms(d, w, beta);
  const Eigen::VectorXd e = d.log_times() - d.covariates() * beta;
  // a censored row below every event pivot has xi = 0
  double e_min_event = std::numeric_limits<double>::infinity();
  for (int m = 0; m < d.num_obs(); ++m)
    if (d.events()[m]) e_min_event = std::min(e_min_event, e[m]);
  for (int m = 0; m < d.num_obs(); ++m)
    if (!d.events()[m] && e[m] < e_min_event)
      CHECK(xi.row(m).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("fast influence and middle-matrix paths match the reference") {
  RngStream rng(802);
  for (int rep = 0; rep < 25; ++rep) {
    testutil::RandomDatasetSpec spec;
    spec.n_clusters = 3 + rep % 5;
    spec.size_min = 1;
    spec.size_max = 3;
    spec.force_ties = rep % 4 == 0;
    auto d = testutil::random_dataset(spec, rng);
    WeightSet w = testutil::random_weights(d, rng);
    Eigen::VectorXd beta = testutil::random_vector(d.dim(), rng);

    Eigen::MatrixXd xf = xi_terms(d, w, beta);
    Eigen::MatrixXd xr = reference::xi_terms(d, w, beta);
    CHECK((xf - xr).lpNorm<Eigen::Infinity>() < 1e-12);

    Eigen::MatrixXd vf = v_hat(d, w, beta);
    Eigen::MatrixXd vr = reference::v_hat(d, w, beta);
    CHECK((vf - vr).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("middle matrix and sandwich are symmetric positive semidefinite") {
  RngStream rng(803);
  testutil::RandomDatasetSpec spec;
  spec.n_clusters = 12;
  spec.size_max = 4;
  auto d = testutil::random_dataset(spec, rng);
  WeightSet w = testutil::random_weights(d, rng);
  Eigen::VectorXd beta = testutil::random_vector(d.dim(), rng);
  Eigen::MatrixXd v = v_hat(d, w, beta);
  CHECK((v - v.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  CHECK(es.eigenvalues().minCoeff() >= -1e-14);

  SandwichResult sr =
      sandwich(d, w, beta, Eigen::MatrixXd::Identity(d.dim(), d.dim()));
  CHECK((sr.sigma_hat - sr.sigma_hat.transpose()).lpNorm<Eigen::Infinity>() <
        1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(sr.sigma_hat);
  CHECK(es2.eigenvalues().minCoeff() >= -1e-10);
  CHECK(sr.std_errors.minCoeff() >= 0.0);
}

TEST_CASE("doubling the covariates halves beta and quarters the covariance") {
  SimulationScenario sc;
  sc.n_clusters = 40;
  sc.seed = 29;
  RngStream rng(sc.seed, 1);
  auto d = generate_dataset(sc, 3.0, rng);

  std::vector<std::vector<Observation>> scaled(d.num_clusters());
  for (int i = 0; i < d.num_clusters(); ++i)
    for (int m = d.cluster_begin(i); m < d.cluster_end(i); ++m) {
      Observation o;
      o.log_time = d.log_times()[m];
      o.event = d.events()[m];
      o.covariates = 2.0 * d.covariates().row(m).transpose();
      scaled[i].push_back(o);
    }
  auto d2 = ClusteredDataset::build(scaled);

  EstimatorConfig cfg;
  auto [f1, s1] = iterate_fit(d, cfg, unit_weights(d));
  auto [f2, s2] = iterate_fit(d2, cfg, unit_weights(d2));
  CHECK(f1.converged);
  CHECK(f2.converged);
  CHECK((f2.beta_hat - 0.5 * f1.beta_hat).lpNorm<Eigen::Infinity>() < 2e-3);
  for (int j = 0; j < 2; ++j)
    CHECK(s2.sigma_hat(j, j) ==
          doctest::Approx(0.25 * s1.sigma_hat(j, j)).epsilon(0.02));
}

TEST_CASE("joint iteration is insensitive to the starting smoothing matrix") {
  SimulationScenario sc;
  sc.n_clusters = 40;
  sc.seed = 31;
  RngStream rng(sc.seed, 1);
  auto d = generate_dataset(sc, 3.0, rng);
  WeightSet w = unit_weights(d);
  EstimatorConfig a, b;
  a.gamma_init = Eigen::MatrixXd::Identity(2, 2);
  b.gamma_init = 4.0 * Eigen::MatrixXd::Identity(2, 2);
  auto [fa, sa] = iterate_fit(d, a, w);
  auto [fb, sb] = iterate_fit(d, b, w);
  CHECK(fa.converged);
  CHECK(fb.converged);
  CHECK((fa.beta_hat - fb.beta_hat).lpNorm<Eigen::Infinity>() < 1e-4);
  CHECK((sa.std_errors - sb.std_errors).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("variance pieces are invariant to cluster order") {
  RngStream rng(804);
  testutil::RandomDatasetSpec spec;
  spec.n_clusters = 7;
  spec.size_max = 3;
  auto d = testutil::random_dataset(spec, rng);
  WeightSet w = testutil::random_weights(d, rng);
  Eigen::VectorXd beta = testutil::random_vector(d.dim(), rng);

  std::vector<std::vector<Observation>> rev;
  std::vector<double> omega_rev;
  std::vector<double> h_rev;
  for (int i = d.num_clusters() - 1; i >= 0; --i) {
    std::vector<Observation> cl;
    for (int m = d.cluster_begin(i); m < d.cluster_end(i); ++m) {
      Observation o;
      o.log_time = d.log_times()[m];
      o.event = d.events()[m];
      o.covariates = d.covariates().row(m).transpose();
      cl.push_back(o);
      h_rev.push_back(w.h[m]);
    }
    rev.push_back(cl);
    omega_rev.push_back(w.omega[i]);
  }
  auto d2 = ClusteredDataset::build(rev);
  WeightSet w2;
  w2.omega = Eigen::Map<Eigen::VectorXd>(omega_rev.data(), omega_rev.size());
  w2.h = Eigen::Map<Eigen::VectorXd>(h_rev.data(), h_rev.size());

  CHECK((v_hat(d, w, beta) - v_hat(d2, w2, beta)).lpNorm<Eigen::Infinity>() <
        1e-12);
  SandwichResult s1 =
      sandwich(d, w, beta, Eigen::MatrixXd::Identity(d.dim(), d.dim()));
  SandwichResult s2 =
      sandwich(d2, w2, beta, Eigen::MatrixXd::Identity(d.dim(), d.dim()));
  CHECK((s1.sigma_hat - s2.sigma_hat).lpNorm<Eigen::Infinity>() < 1e-8);
}
