#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "aftrank/csv.hpp"
#include "aftrank/dataset.hpp"
#include "aftrank/stats.hpp"
#include "helpers.hpp"

using namespace aftrank;

namespace {

Observation obs(double log_time, int event, std::initializer_list<double> x) {
  Observation o;
  o.log_time = log_time;
  o.event = event;
  o.covariates = Eigen::VectorXd(x.size());
  int j = 0;
  for (double v : x) o.covariates[j++] = v;
  return o;
}

}  // namespace

TEST_CASE("validation accepts a well-formed dataset") {
  auto d = ClusteredDataset::build(
      {{obs(0.1, 1, {1.0, 2.0}), obs(0.2, 0, {0.0, 1.0})}, {obs(-0.3, 0, {2.0, 2.0})}});
  CHECK(d.num_clusters() == 2);
  CHECK(d.num_obs() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.cluster_size(0) == 2);
  CHECK(d.cluster_of(2) == 1);
}

TEST_CASE("validation errors name the offending observation") {
  auto nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(
      ClusteredDataset::build(
          {{obs(0.1, 1, {1.0, 2.0}), obs(0.2, 0, {nan, 1.0})}, {obs(0.3, 0, {0.0, 0.0})}}),
      doctest::Contains("(i=1,k=2)"), DataError);
  CHECK_THROWS_WITH_AS(
      ClusteredDataset::build({{obs(0.1, 0, {1.0})}, {obs(0.2, 0, {2.0})}}),
      doctest::Contains("zero events"), DataError);
  CHECK_THROWS_AS(ClusteredDataset::build({{obs(0.1, 1, {1.0})}}), DataError);
  CHECK_THROWS_AS(
      ClusteredDataset::build({{obs(0.1, 1, {1.0})}, {obs(0.2, 1, {2.0, 3.0})}}),
      DataError);
  CHECK_THROWS_AS(ClusteredDataset::build({{obs(0.1, 1, {1.0})}, {}}), DataError);
  CHECK_THROWS_AS(
      ClusteredDataset::build({{obs(0.1, 2, {1.0})}, {obs(0.2, 1, {2.0})}}),
      DataError);
}

TEST_CASE("compute_residuals") {
  auto d = ClusteredDataset::build(
      {{obs(1.0, 1, {1.0, 1.0})}, {obs(0.5, 1, {2.0, 0.0}), obs(-1.0, 0, {0.0, 3.0})}});

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  CHECK(compute_residuals(d, zero).e.isApprox(d.log_times()));

  Eigen::VectorXd beta(2);
  beta << 0.4, 0.6;
  CHECK(compute_residuals(d, beta).e[0] == doctest::Approx(0.0).epsilon(1e-15));

  // independent per-element recomputation
  RngStream rng(17);
  Eigen::VectorXd b = testutil::random_vector(2, rng);
  Residuals r = compute_residuals(d, b);
  for (int m = 0; m < d.num_obs(); ++m) {
    double expect = d.log_times()[m];
    for (int j = 0; j < 2; ++j) expect -= d.covariates()(m, j) * b[j];
    CHECK(r.e[m] == doctest::Approx(expect).epsilon(1e-15));
  }

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(compute_residuals(d, wrong), DataError);
}

TEST_CASE("read_csv groups by first appearance and log-transforms") {
  const char* path = "test_tmp_small.csv";
  {
    std::ofstream f(path);
    f << "id,time,status,x1\n"
      << "a,1.0,1,0.5\n"
      << "b,2.0,0,1.5\n"
      << "a,3.0,1,2.5\n";
  }
  CsvSchema schema{"id", "time", "status", {"x1"}};
  auto d = read_csv(path, schema);
  CHECK(d.num_clusters() == 2);
  CHECK(d.num_obs() == 3);
  CHECK(d.cluster_size(0) == 2);
  CHECK(d.cluster_ids()[0] == "a");
  CHECK(d.log_times()[0] == doctest::Approx(0.0));
  CHECK(d.log_times()[1] == doctest::Approx(std::log(3.0)));  // second "a" row
  CHECK(d.log_times()[2] == doctest::Approx(std::log(2.0)));
  std::remove(path);
}

TEST_CASE("read_csv error paths") {
  const char* path = "test_tmp_bad.csv";
  CsvSchema schema{"id", "time", "status", {"x1"}};
  {
    std::ofstream f(path);
    f << "id,time,status,x1\na,0.0,1,0.5\nb,1.0,1,1.0\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path, schema), doctest::Contains("nonpositive time"),
                       DataError);
  {
    std::ofstream f(path);
    f << "id,time,status,x1\na,1.0,1,oops\nb,1.0,1,1.0\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path, schema), doctest::Contains("line 2"), DataError);
  {
    std::ofstream f(path);
    f << "id,time,status\na,1.0,1\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path, schema), doctest::Contains("missing column"),
                       DataError);
  std::remove(path);
}

TEST_CASE("shipped hiv_like.csv parses with p=6") {
  CsvSchema schema{"patient", "time", "death",
                   {"CD4", "obstime", "drug", "gender", "prevOI", "AZT"}};
  auto d = read_csv(std::string(AFTRANK_DATA_DIR) + "/hiv_like.csv", schema);
  CHECK(d.dim() == 6);
  CHECK(d.num_clusters() == 50);
  CHECK(d.num_obs() == 147);
}

TEST_CASE("csv round trip reproduces structure and values") {
  CsvSchema schema{"patient", "time", "death",
                   {"CD4", "obstime", "drug", "gender", "prevOI", "AZT"}};
  auto d = read_csv(std::string(AFTRANK_DATA_DIR) + "/hiv_like.csv", schema);
  const char* path = "test_tmp_roundtrip.csv";
  write_csv(path, d, schema);
  auto d2 = read_csv(path, schema);
  REQUIRE(d2.num_obs() == d.num_obs());
  REQUIRE(d2.num_clusters() == d.num_clusters());
  for (int m = 0; m < d.num_obs(); ++m) {
    CHECK(d2.log_times()[m] ==
          doctest::Approx(d.log_times()[m]).epsilon(1e-12));
    CHECK(d2.events()[m] == d.events()[m]);
    for (int j = 0; j < d.dim(); ++j)
      CHECK(d2.covariates()(m, j) ==
            doctest::Approx(d.covariates()(m, j)).epsilon(1e-12));
  }
  for (int i = 0; i < d.num_clusters(); ++i) {
    CHECK(d2.cluster_size(i) == d.cluster_size(i));
    CHECK(d2.cluster_ids()[i] == d.cluster_ids()[i]);
  }
  std::remove(path);
}
