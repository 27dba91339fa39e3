#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "flash/config.hpp"
#include "flash/eigensolve.hpp"
#include "flash/io.hpp"
#include "flash/rng.hpp"
#include "flash/statistics.hpp"

using flash::Matrix;
using flash::Rng;
using flash::Vector;

namespace {

// Independent eigenvalue oracle: explicit Householder reduction to
// tridiagonal form followed by Sturm-count bisection.  Deliberately shares no
// code with the library path so the two can disagree.
std::vector<double> bisection_eigenvalues(Matrix<double> h, double tol) {
  const auto d = h.rows();
  for (Eigen::Index k = 0; k + 2 < d; ++k) {
    Vector<double> x = h.col(k).segment(k + 1, d - k - 1);
    const double alpha = (x[0] >= 0 ? -1.0 : 1.0) * x.norm();
    Vector<double> v = x;
    v[0] -= alpha;
    const double vnorm = v.norm();
    if (vnorm < 1e-300) continue;
    v /= vnorm;
    Matrix<double> block = h.block(k + 1, k + 1, d - k - 1, d - k - 1);
    Vector<double> row = h.row(k).segment(k + 1, d - k - 1);
    row -= 2.0 * v * v.dot(row);
    block -= 2.0 * v * (v.transpose() * block);
    block -= 2.0 * (block * v) * v.transpose();
    h.row(k).segment(k + 1, d - k - 1) = row;
    h.col(k).segment(k + 1, d - k - 1) = row;
    h.block(k + 1, k + 1, d - k - 1, d - k - 1) = block;
  }
  std::vector<double> diag(static_cast<std::size_t>(d)), off;
  for (Eigen::Index i = 0; i < d; ++i) diag[static_cast<std::size_t>(i)] = h(i, i);
  for (Eigen::Index i = 0; i + 1 < d; ++i) off.push_back(h(i, i + 1));

  // number of eigenvalues strictly below lambda via the Sturm sequence
  auto count_below = [&](double lambda) {
    int count = 0;
    double q = diag[0] - lambda;
    if (q < 0) ++count;
    for (std::size_t i = 1; i < diag.size(); ++i) {
      const double denom = std::abs(q) < 1e-300 ? (q < 0 ? -1e-300 : 1e-300) : q;
      q = diag[i] - lambda - off[i - 1] * off[i - 1] / denom;
      if (q < 0) ++count;
    }
    return count;
  };

  double lo = diag[0], hi = diag[0];
  for (std::size_t i = 0; i < diag.size(); ++i) {
    double r = 0;
    if (i > 0) r += std::abs(off[i - 1]);
    if (i < off.size()) r += std::abs(off[i]);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }

  std::vector<double> out;
  for (int k = 0; k < d; ++k) {
    double a = lo, b = hi;
    while (b - a > tol) {
      const double mid = 0.5 * (a + b);
      if (count_below(mid) <= k)
        a = mid;
      else
        b = mid;
    }
    out.push_back(0.5 * (a + b));
  }
  return out;
}

Matrix<double> random_symmetric(Eigen::Index d, Rng& rng) {
  Matrix<double> m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.uniform_in(-2, 2);
  return m;
}

}  // namespace

TEST_CASE("eigensolve of a fixed diagonal") {
  Matrix<double> h(2, 2);
  h << 1, 0, 0, -0.5;
  const auto r = flash::dense_eigensolve(h);
  CHECK(r.eigenvalues[0] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(r.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.min_eigenvalue() == r.eigenvalues[0]);
  CHECK(std::abs(r.min_eigenvector()[1]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(r.min_eigenvector()[0]) <= 1e-12);
}

TEST_CASE("eigensolve of the identity") {
  const auto r = flash::dense_eigensolve<double>(Matrix<double>::Identity(5, 5));
  for (int i = 0; i < 5; ++i) CHECK(r.eigenvalues[i] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("eigensolve reconstructs a random symmetric matrix") {
  Rng rng(51);
  const Matrix<double> h = random_symmetric(8, rng);
  const auto r = flash::dense_eigensolve(h);
  const Matrix<double> back =
      r.eigenvectors * r.eigenvalues.asDiagonal() * r.eigenvectors.transpose();
  CHECK((back - h).norm() <= 1e-8 * std::max(1.0, h.norm()));
  CHECK((r.eigenvectors.transpose() * r.eigenvectors - Matrix<double>::Identity(8, 8)).norm() <=
        1e-12);
  for (int i = 0; i + 1 < 8; ++i) CHECK(r.eigenvalues[i] <= r.eigenvalues[i + 1]);
  CHECK(r.residuals.maxCoeff() <= 1e-8 * std::max(1.0, h.norm()));
}

TEST_CASE("eigensolve agrees with an independent bisection oracle") {
  Rng rng(53);
  for (Eigen::Index d : {2, 3, 5, 8}) {
    const Matrix<double> h = random_symmetric(d, rng);
    const auto lib = flash::dense_eigensolve(h);
    const auto ref = bisection_eigenvalues(h, 1e-9);
    for (Eigen::Index i = 0; i < d; ++i)
      CHECK(std::abs(lib.eigenvalues[i] - ref[static_cast<std::size_t>(i)]) <= 1e-6);
  }
}

TEST_CASE("eigensolve residuals and orthonormality hold at moderate size") {
  Rng rng(57);
  const Matrix<double> h = random_symmetric(64, rng);
  const auto r = flash::dense_eigensolve(h);
  CHECK(r.residuals.maxCoeff() <= 1e-8 * std::max(1.0, h.norm()));
  CHECK((r.eigenvectors.transpose() * r.eigenvectors - Matrix<double>::Identity(64, 64))
            .cwiseAbs()
            .maxCoeff() <= 1e-10);
}

TEST_CASE("eigensolve rejects bad input") {
  CHECK_THROWS_AS(flash::dense_eigensolve<double>(Matrix<double>::Zero(0, 0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(flash::dense_eigensolve<double>(Matrix<double>::Zero(2, 3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(flash::dense_eigensolve<double>(Matrix<double>::Identity(513, 513)),
                  std::invalid_argument);
  Matrix<double> asym(2, 2);
  asym << 0, 1, 0, 0;
  CHECK_THROWS_AS(flash::dense_eigensolve(asym), std::invalid_argument);
  Matrix<double> nan2 = Matrix<double>::Zero(2, 2);
  nan2(0, 0) = std::nan("");
  CHECK_THROWS_AS(flash::dense_eigensolve(nan2), std::invalid_argument);
}

TEST_CASE("basic sample statistics") {
  const std::vector<double> xs = {1, 2, 3, 4};
  CHECK(flash::mean_of(xs) == 2.5);
  CHECK(flash::sample_stddev(xs) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
  CHECK(flash::standard_error(xs) ==
        doctest::Approx(std::sqrt(5.0 / 3.0) / 2).epsilon(1e-14));
  CHECK(flash::median_of({3, 1, 2}) == 2.0);
  CHECK(flash::median_of({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS_AS(flash::mean_of({}), std::invalid_argument);
}

TEST_CASE("binomial tail values match hand computation") {
  // Bin(10, 1/2): P(X <= 5) = 638/1024, P(X <= 2) = 56/1024
  CHECK(flash::binomial_cdf(5, 10, 0.5) == doctest::Approx(0.623046875).epsilon(1e-12));
  CHECK(flash::binomial_cdf(2, 10, 0.5) == doctest::Approx(0.0546875).epsilon(1e-12));
  // Bin(5, 0.2): P(X <= 1) = 0.8^5 + 5 * 0.2 * 0.8^4
  CHECK(flash::binomial_cdf(1, 5, 0.2) == doctest::Approx(0.73728).epsilon(1e-12));
  CHECK(flash::binomial_cdf(-1, 5, 0.2) == 0.0);
  CHECK(flash::binomial_cdf(5, 5, 0.2) == 1.0);
}

TEST_CASE("rate test accepts on-target counts and rejects deep deficits") {
  // 180/200 at a nominal 0.9 rate is unremarkable
  CHECK(flash::rate_consistent_with(180, 200, 0.9, 0.01));
  // 165/200 is 3.5 sigma below, firmly rejected
  CHECK_FALSE(flash::rate_consistent_with(165, 200, 0.9, 0.01));
  CHECK(flash::rate_consistent_with(200, 200, 0.9, 0.01));
}

TEST_CASE("sign test p-values") {
  CHECK(flash::sign_test_p_value(20, 20) == doctest::Approx(std::pow(0.5, 20)).epsilon(1e-9));
  // P(X >= 15), X ~ Bin(20, 1/2) = 21700/1048576
  CHECK(flash::sign_test_p_value(15, 20) ==
        doctest::Approx(21700.0 / 1048576.0).epsilon(1e-9));
  CHECK(flash::sign_test_p_value(0, 20) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("chi-square quantile approximation is close to table values") {
  CHECK(flash::chi_square_quantile(10, 0.99) == doctest::Approx(23.209).epsilon(0.02));
  CHECK(flash::chi_square_quantile(50, 0.99) == doctest::Approx(76.154).epsilon(0.02));
  CHECK(flash::chi_square_quantile(5, 0.95) == doctest::Approx(11.070).epsilon(0.02));
}

TEST_CASE("key=value parsing round trip") {
  const auto cfg = flash::KeyValueConfig::from_string(
      "# comment line\n"
      "problem.name = separable-quartic\n"
      "problem.d = 10\n"
      "flash.eps = 0.25\n"
      "seeds = 1,2,3\n"
      "\n"
      "  spaced.key   =   spaced value  \n");
  CHECK(cfg.get_string("problem.name", "") == "separable-quartic");
  CHECK(cfg.get_int("problem.d", -1) == 10);
  CHECK(cfg.get_real("flash.eps", 0) == 0.25);
  CHECK(cfg.get_string("spaced.key", "") == "spaced value");
  const auto seeds = cfg.get_uint_list("seeds", {});
  REQUIRE(seeds.size() == 3);
  CHECK(seeds[0] == 1);
  CHECK(seeds[2] == 3);
  CHECK(cfg.get_int("missing", 42) == 42);
  CHECK_FALSE(cfg.has("missing"));
}

TEST_CASE("config parser rejects malformed input") {
  CHECK_THROWS_AS(flash::KeyValueConfig::from_string("a = 1\na = 2\n"), flash::ConfigError);
  CHECK_THROWS_AS(flash::KeyValueConfig::from_string("no equals sign\n"), flash::ConfigError);
  const auto cfg = flash::KeyValueConfig::from_string("a = not_a_number\n");
  CHECK_THROWS_AS(cfg.get_int("a", 0), flash::ConfigError);
  CHECK_THROWS_AS(cfg.get_real("a", 0), flash::ConfigError);

  const auto cfg2 = flash::KeyValueConfig::from_string("known = 1\nmystery = 2\n");
  CHECK_THROWS_WITH_AS(cfg2.require_known({"known"}),
                       doctest::Contains("mystery"), flash::ConfigError);
  CHECK_NOTHROW(cfg2.require_known({"known", "mystery"}));
}

TEST_CASE("real formatting survives a round trip") {
  for (double v : {1.0 / 3.0, 0.1, -2.5e-17, 1e300, 0.0, 123456789.123456789}) {
    const std::string s = flash::fmt_real(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("csv writer emits header and quoted-free rows") {
  flash::CsvWriter w({"experiment", "seed", "value"});
  w.append_row({"demo", "1", flash::fmt_real(0.5)});
  w.append_row({"demo", "2", flash::fmt_real(-1.0)});
  CHECK(w.text() == "experiment,seed,value\ndemo,1,0.5\ndemo,2,-1\n");
  CHECK_THROWS_AS(w.append_row({"too", "few"}), std::invalid_argument);
  CHECK_THROWS_AS(w.append_row({"a,b", "1", "2"}), std::invalid_argument);
}
