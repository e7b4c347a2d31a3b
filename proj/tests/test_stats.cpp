#include "doctest.h"

#include <cmath>
#include <vector>

#include "aftrank/stats.hpp"

using namespace aftrank;

namespace {

// Quadrature oracle for Phi: Simpson's rule on the density from 0 to x.
double phi_by_quadrature(double x) {
  const int n = 20000;  // even
  const double h = x / n;
  double sum = std_normal_pdf(0.0) + std_normal_pdf(x);
  for (int i = 1; i < n; ++i)
    sum += (i % 2 ? 4.0 : 2.0) * std_normal_pdf(i * h);
  return 0.5 + sum * h / 3.0;
}

}  // namespace

TEST_CASE("std_normal_pdf") {
  CHECK(std_normal_pdf(0.0) == doctest::Approx(0.3989422804).epsilon(1e-9));
  // direct formula oracle
  CHECK(std_normal_pdf(1.0) ==
        doctest::Approx(std::exp(-0.5) / std::sqrt(2.0 * std::acos(-1.0)))
            .epsilon(1e-14));
  RngStream rng(7);
  for (int i = 0; i < 100; ++i) {
    double x = 4.0 * rng.normal();
    CHECK(std_normal_pdf(x) == doctest::Approx(std_normal_pdf(-x)).epsilon(1e-15));
  }
}

TEST_CASE("std_normal_cdf values and symmetry") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std::fabs(std_normal_cdf(1.96) - phi_by_quadrature(1.96)) < 1e-12);
  CHECK(std_normal_cdf(1.96) == doctest::Approx(0.9750021049).epsilon(1e-9));
  CHECK(std_normal_cdf(std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(std_normal_cdf(-std::numeric_limits<double>::infinity()) == 0.0);
  RngStream rng(11);
  for (int i = 0; i < 100; ++i) {
    double x = 3.0 * rng.normal();
    CHECK(std::fabs(std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))) < 1e-14);
  }
}

TEST_CASE("std_normal_cdf monotone on a grid") {
  double prev = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    double x = -10.0 + i * 1e-4;
    double v = std_normal_cdf(x);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("chisq_quantile reference values") {
  CHECK(chisq_quantile(0.95, 2) == doctest::Approx(5.991464547).epsilon(1e-9));
  CHECK(chisq_quantile(0.5, 2) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-10));
  CHECK(chisq_quantile(0.95, 6) == doctest::Approx(12.59158724).epsilon(1e-9));
  CHECK_THROWS(chisq_quantile(0.0, 2));
  CHECK_THROWS(chisq_quantile(1.0, 2));
  CHECK_THROWS(chisq_quantile(0.5, 0));
}

TEST_CASE("chisq_quantile inverts the cdf") {
  for (int df = 1; df <= 10; ++df)
    for (int pi = 1; pi <= 99; pi += 7) {
      double p = pi / 100.0;
      double q = chisq_quantile(p, df);
      CHECK(chisq_cdf(q, df) == doctest::Approx(p).epsilon(1e-9));
    }
}

TEST_CASE("midranks") {
  Eigen::VectorXd v(3);
  v << 3.0, 1.0, 2.0;
  Eigen::VectorXd r = midranks(v);
  CHECK(r[0] == 3.0);
  CHECK(r[1] == 1.0);
  CHECK(r[2] == 2.0);

  v << 1.0, 1.0, 2.0;
  r = midranks(v);
  CHECK(r[0] == 1.5);
  CHECK(r[1] == 1.5);
  CHECK(r[2] == 3.0);

  // checksum oracle on random vectors with duplicates
  RngStream rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    int m = 5 + rep;
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w[i] = std::floor(5.0 * rng.uniform());
    CHECK(midranks(w).sum() == doctest::Approx(m * (m + 1) / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("rng streams are reproducible") {
  RngStream a(123, 4), b(123, 4), c(123, 5);
  bool same = true, differ = false;
  for (int i = 0; i < 100; ++i) {
    auto x = a.next_u64();
    same = same && x == b.next_u64();
    differ = differ || x != c.next_u64();
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("mvn exchangeable: rho=0 reduces to iid draws") {
  RngStream r1(9, 1), r2(9, 1);
  ExchangeableCorrelation corr(0.0, 5);
  Eigen::VectorXd z = sample_mvn_exchangeable(5, corr, r1);
  for (int k = 0; k < 5; ++k) CHECK(z[k] == r2.normal());
}

TEST_CASE("mvn exchangeable moments") {
  const int n = 5, draws = 200000;
  ExchangeableCorrelation corr(0.5, n);
  RngStream rng(42, 7);
  double sum = 0.0, sumsq = 0.0, cross = 0.0;
  long npairs = 0, nvals = 0;
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd z = sample_mvn_exchangeable(n, corr, rng);
    for (int k = 0; k < n; ++k) {
      sum += z[k];
      sumsq += z[k] * z[k];
      ++nvals;
      for (int l = k + 1; l < n; ++l) {
        cross += z[k] * z[l];
        ++npairs;
      }
    }
  }
  double var = sumsq / nvals - (sum / nvals) * (sum / nvals);
  CHECK(var == doctest::Approx(1.0).epsilon(0.01));
  CHECK(cross / npairs == doctest::Approx(0.5).epsilon(0.025));
  CHECK_THROWS(ExchangeableCorrelation(1.0, 3));
  CHECK_THROWS(ExchangeableCorrelation(-0.1, 3));
}

TEST_CASE("mvt exchangeable: df=3 marginal variance near 3") {
  const int n = 4, draws = 400000;
  ExchangeableCorrelation corr(0.5, n);
  RngStream rng(5, 3);
  double sumsq = 0.0;
  long nvals = 0;
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd z = sample_mvt_exchangeable(n, corr, 3, rng);
    for (int k = 0; k < n; ++k) {
      sumsq += z[k] * z[k];
      ++nvals;
    }
  }
  // t3 has infinite kurtosis, so the sample variance converges slowly
  CHECK(sumsq / nvals == doctest::Approx(3.0).epsilon(0.15));
}

TEST_CASE("mvt exchangeable: huge df is indistinguishable from mvn") {
  const int n = 3, draws = 200000;
  ExchangeableCorrelation corr(0.5, n);
  RngStream rng(8, 1);
  double sumsq = 0.0, cross = 0.0;
  long nvals = 0, npairs = 0;
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd z = sample_mvt_exchangeable(n, corr, 1000000, rng);
    for (int k = 0; k < n; ++k) {
      sumsq += z[k] * z[k];
      ++nvals;
      for (int l = k + 1; l < n; ++l) {
        cross += z[k] * z[l];
        ++npairs;
      }
    }
  }
  CHECK(sumsq / nvals == doctest::Approx(1.0).epsilon(0.015));
  CHECK(cross / npairs == doctest::Approx(0.5).epsilon(0.025));
}

TEST_CASE("mvt exchangeable: rho=0.8 components positively rank-correlated") {
  const int draws = 50000;
  ExchangeableCorrelation corr(0.8, 4);
  RngStream rng(77, 2);
  long concordant = 0, total = 0;
  Eigen::VectorXd prev;
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd z = sample_mvt_exchangeable(4, corr, 3, rng);
    if (d > 0) {
      // Kendall-style check across components within a draw
      for (int k = 0; k < 4; ++k)
        for (int l = k + 1; l < 4; ++l) {
          if ((z[k] - prev[k]) * (z[l] - prev[l]) > 0) ++concordant;
          ++total;
        }
    }
    prev = z;
  }
  CHECK(static_cast<double>(concordant) / total > 0.55);
}
