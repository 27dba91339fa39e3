#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace flash {

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty sample");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_stddev: need at least 2 samples");
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double standard_error(const std::vector<double>& xs) {
  return sample_stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median_of: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline double log_binomial_pmf(std::int64_t k, std::int64_t n, double p) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  if (p <= 0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (p >= 1) return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
  const double lc = std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) -
                    std::lgamma(double(n - k) + 1);
  return lc + double(k) * std::log(p) + double(n - k) * std::log1p(-p);
}

// P(Bin(n, p) <= k), exact summation.
inline double binomial_cdf(std::int64_t k, std::int64_t n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double acc = 0;
  for (std::int64_t i = 0; i <= k; ++i) acc += std::exp(log_binomial_pmf(i, n, p));
  return std::min(acc, 1.0);
}

// One-sided test that a success rate is not below rate0: rejects (returns
// false) only when the observed count is in the lower alpha tail of
// Bin(n, rate0).
inline bool rate_consistent_with(std::int64_t successes, std::int64_t n, double rate0,
                                 double alpha) {
  if (n <= 0) throw std::invalid_argument("rate_consistent_with: empty sample");
  return binomial_cdf(successes, n, rate0) > alpha;
}

// One-sided sign test p-value: probability of at least `wins` successes out
// of n fair coin flips.  Ties must already be excluded from n.
inline double sign_test_p_value(std::int64_t wins, std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("sign_test_p_value: empty sample");
  if (wins < 0 || wins > n) throw std::invalid_argument("sign_test_p_value: bad win count");
  return 1.0 - binomial_cdf(wins - 1, n, 0.5);
}

// Wilson-Hilferty approximation of the chi-square quantile; adequate for the
// goodness-of-fit checks here (df well above 1, moderate quantiles).
inline double chi_square_quantile(double df, double prob) {
  if (df <= 0) throw std::invalid_argument("chi_square_quantile: df must be positive");
  // Inverse normal CDF via Acklam's rational approximation.
  auto inv_normal = [](double p) {
    if (p <= 0 || p >= 1) throw std::invalid_argument("inv_normal: p outside (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double pl = 0.02425;
    double q, r;
    if (p < pl) {
      q = std::sqrt(-2 * std::log(p));
      return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
             ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > 1 - pl) {
      q = std::sqrt(-2 * std::log(1 - p));
      return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
             ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  };
  const double z = inv_normal(prob);
  const double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  return df * t * t * t;
}

struct ChiSquareResult {
  double statistic = 0;
  double critical = 0;
  std::int64_t df = 0;
  bool pass = false;
};

// Goodness of fit of integer samples against the geometric law
// P(X = k) = p^k (1 - p).  Bins with expected count below 5 are merged into
// the tail.  Passes at the given significance when the statistic stays below
// the chi-square quantile.
inline ChiSquareResult chi_square_geometric(const std::vector<std::int64_t>& samples, double p,
                                            double significance = 0.99) {
  if (samples.size() < 100)
    throw std::invalid_argument("chi_square_geometric: need at least 100 samples");
  if (!(p > 0 && p < 1)) throw std::invalid_argument("chi_square_geometric: p outside (0, 1)");
  const double n = static_cast<double>(samples.size());

  std::int64_t cells = 0;
  double tail_prob = 1.0;
  std::vector<double> expected;
  while (tail_prob * n >= 10.0 && cells < 200) {
    const double pk = std::pow(p, double(cells)) * (1 - p);
    if (pk * n < 5.0) break;
    expected.push_back(pk * n);
    tail_prob -= pk;
    ++cells;
  }
  if (cells < 2) throw std::invalid_argument("chi_square_geometric: too few usable bins");
  expected.push_back(tail_prob * n);  // merged tail

  std::vector<double> observed(expected.size(), 0.0);
  for (std::int64_t s : samples) {
    if (s < 0) throw std::invalid_argument("chi_square_geometric: negative sample");
    const std::size_t bin = s < cells ? static_cast<std::size_t>(s) : expected.size() - 1;
    observed[bin] += 1.0;
  }

  ChiSquareResult r;
  for (std::size_t i = 0; i < expected.size(); ++i)
    r.statistic += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  r.df = static_cast<std::int64_t>(expected.size()) - 1;
  r.critical = chi_square_quantile(static_cast<double>(r.df), significance);
  r.pass = r.statistic <= r.critical;
  return r;
}

}  // namespace flash
