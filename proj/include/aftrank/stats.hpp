#pragma once

// Deterministic statistical primitives: normal pdf/cdf, chi-square
// quantiles, midranks, seeded RNG, and exchangeable-correlation
// multivariate normal/t sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace aftrank {

inline double std_normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double std_normal_cdf(double x) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  static const double inv_sqrt2 = 0.7071067811865475244;
  return 0.5 * std::erfc(-x * inv_sqrt2);
}

namespace detail {

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // series representation
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction for Q(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  double q = std::exp(-x + a * std::log(x) - gln) * h;
  return 1.0 - q;
}

}  // namespace detail

inline double chisq_cdf(double x, int df) {
  if (df < 1) throw std::invalid_argument("chisq_cdf: df must be >= 1");
  if (x <= 0.0) return 0.0;
  return detail::gamma_p(0.5 * df, 0.5 * x);
}

// Quantile of chi-square(df) by bracketing bisection on the CDF.
inline double chisq_quantile(double prob, int df) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("chisq_quantile: prob must be in (0,1)");
  if (df < 1) throw std::invalid_argument("chisq_quantile: df must be >= 1");
  double lo = 0.0, hi = df + 10.0;
  while (chisq_cdf(hi, df) < prob) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (chisq_cdf(mid, df) < prob)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

// Ranks in 1..M; ties receive the average of their covered positions.
inline Eigen::VectorXd midranks(const Eigen::VectorXd& values) {
  const int m = static_cast<int>(values.size());
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return values[a] < values[b]; });
  Eigen::VectorXd ranks(m);
  int i = 0;
  while (i < m) {
    int j = i;
    while (j + 1 < m && values[idx[j + 1]] == values[idx[i]]) ++j;
    double avg = 0.5 * (i + j) + 1.0;  // average of positions i..j, 1-based
    for (int k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// xoshiro256++ with splitmix64 seeding; (seed, stream) pins the sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t sm = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    for (auto& w : s_) w = splitmix64(sm);
    has_spare_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on (0, 1), 53-bit resolution, never exactly 0.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive range
    auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Marsaglia-Tsang; shape > 0, unit scale.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chisq(double df) { return 2.0 * gamma(0.5 * df); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t s_[4];
  double spare_;
  bool has_spare_;
};

// Exchangeable correlation matrix Sigma(rho): 1 on the diagonal, rho off it.
struct ExchangeableCorrelation {
  double rho;
  int dim;

  ExchangeableCorrelation(double rho_, int dim_) : rho(rho_), dim(dim_) {
    if (dim < 1) throw std::invalid_argument("ExchangeableCorrelation: dim < 1");
    if (!(rho >= 0.0 && rho < 1.0))
      throw std::invalid_argument("ExchangeableCorrelation: rho must be in [0,1)");
  }
};

// One draw from N(0, Sigma(rho)) via the one-factor construction
// z_k = sqrt(rho) u + sqrt(1-rho) v_k.
inline Eigen::VectorXd sample_mvn_exchangeable(int n, const ExchangeableCorrelation& corr,
                                               RngStream& rng) {
  if (corr.dim != n)
    throw std::invalid_argument("sample_mvn_exchangeable: dim mismatch");
  const double a = std::sqrt(corr.rho);
  const double b = std::sqrt(1.0 - corr.rho);
  const double u = a > 0.0 ? rng.normal() : 0.0;
  Eigen::VectorXd z(n);
  for (int k = 0; k < n; ++k) z[k] = a * u + b * rng.normal();
  return z;
}

// One draw from T_df(0, Sigma(rho)): mvn draw / sqrt(w/df), w ~ chi^2_df.
inline Eigen::VectorXd sample_mvt_exchangeable(int n, const ExchangeableCorrelation& corr,
                                               int df, RngStream& rng) {
  if (df < 1) throw std::invalid_argument("sample_mvt_exchangeable: df < 1");
  Eigen::VectorXd z = sample_mvn_exchangeable(n, corr, rng);
  double w = rng.chisq(static_cast<double>(df));
  return z / std::sqrt(w / df);
}

}  // namespace aftrank
