#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <vector>

#include "flash/problems.hpp"
#include "flash/scsg.hpp"
#include "flash/statistics.hpp"

using flash::EvalCounters;
using flash::Rng;
using flash::ScsgConfig;
using flash::Vector;

namespace {

std::shared_ptr<flash::FiniteSumProblem<double>> quartic_fs(flash::Index d, flash::Index n,
                                                            double sigma, std::uint64_t seed) {
  return flash::make_finite_sum_problem<double>(flash::TestProblemName::SeparableQuartic, d, n,
                                                sigma, seed);
}

Vector<double> random_box_point(flash::Index d, double half_width, Rng& rng) {
  Vector<double> x(d);
  for (flash::Index i = 0; i < d; ++i) x[i] = rng.uniform_in(-half_width, half_width);
  return x;
}

}  // namespace

TEST_CASE("geometric sampling basics") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) CHECK(flash::geometric_sample(0.0, rng) == 0);
  CHECK_THROWS_AS(flash::geometric_sample(1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(flash::geometric_sample(-0.1, rng), std::invalid_argument);
  CHECK_THROWS_AS(flash::geometric_sample(1.5, rng), std::invalid_argument);
}

TEST_CASE("geometric mean matches B over b") {
  // p = B/(B+b) with B=100, b=1 has mean exactly 100
  Rng rng(5);
  const double p = 100.0 / 101.0;
  std::vector<double> draws;
  for (int i = 0; i < 10000; ++i)
    draws.push_back(static_cast<double>(flash::geometric_sample(p, rng)));
  const double mean = flash::mean_of(draws);
  const double se = flash::standard_error(draws);
  CHECK(std::abs(mean - 100.0) <= 3 * se);
}

TEST_CASE("geometric samples pass the goodness-of-fit gate and corruption fails it") {
  Rng rng(7);
  std::vector<std::int64_t> draws;
  for (int i = 0; i < 100000; ++i) draws.push_back(flash::geometric_sample(0.9, rng));
  const auto fit = flash::chi_square_geometric(draws, 0.9);
  CHECK(fit.pass);
  CHECK(fit.df >= 2);

  for (auto& s : draws) s += 1;  // shifted law is visibly not geometric
  const auto bad = flash::chi_square_geometric(draws, 0.9);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("standard tuning gives step ratio one sixth") {
  for (flash::Index b : {flash::Index(1), flash::Index(4)}) {
    const auto cfg = ScsgConfig<double>::from_constants(11.0, 1000, b);
    CHECK(cfg.step_ratio(11.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  }
  // n = 100, b = 1, L1 = 11: eta = 1/(6 * 11 * 100^(2/3))
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 100, 1);
  CHECK(cfg.step_size ==
        doctest::Approx(1.0 / (66.0 * std::pow(100.0, 2.0 / 3.0))).epsilon(1e-14));
}

TEST_CASE("config validation rejects bad shapes") {
  ScsgConfig<double> c;
  c.outer_batch = 4;
  c.inner_batch = 5;
  c.step_size = 0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.inner_batch = 2;
  c.step_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.step_size = 0.1;
  c.num_epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.num_epochs = 1;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("zero-length epochs return the start point bit for bit") {
  auto p = quartic_fs(3, 10, 0.4, 9);
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 10, 1);
  Rng scan(1);
  const Vector<double> x0 = random_box_point(3, 1.5, scan);
  const Vector<double> g = flash::full_gradient(*p, x0);
  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    Rng rng(seed);
    const auto out = flash::scsg_epoch<double>(*p, x0, cfg, &g, rng);
    if (out.inner_length == 0) {
      CHECK((out.x_out.array() == x0.array()).all());
      CHECK(out.consumed.grad_evals == 0);  // anchored epoch, no inner steps
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("first inner step moves exactly along the anchor gradient") {
  auto p = quartic_fs(3, 10, 0.4, 9);
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 10, 1);
  Rng scan(2);
  const Vector<double> x0 = random_box_point(3, 1.5, scan);
  const Vector<double> g = flash::full_gradient(*p, x0);
  bool found = false;
  for (std::uint64_t seed = 0; seed < 400 && !found; ++seed) {
    Rng rng(seed);
    const auto out = flash::scsg_epoch<double>(*p, x0, cfg, &g, rng);
    if (out.inner_length == 1) {
      // the two batch gradients at x0 cancel exactly, leaving x0 - eta g
      const Vector<double> expect = x0 - cfg.step_size * g;
      CHECK((out.x_out - expect).norm() <= 1e-12);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("identical quadratic components make the epoch deterministic descent") {
  auto core = std::make_shared<flash::QuadraticCore<double>>(
      flash::Matrix<double>::Identity(4, 4).eval());
  auto p = std::make_shared<flash::FiniteSumLinearNoise<double>>(core, 16, 0.0, 3);
  const auto cfg = ScsgConfig<double>::from_constants(1.0, 16, 1);
  Rng scan(4);
  const Vector<double> x0 = random_box_point(4, 1.0, scan);
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Rng rng(seed);
    const auto out = flash::scsg_epoch<double>(*p, x0, cfg, nullptr, rng);
    // every correction is exact, so the epoch contracts by (1 - eta)^T
    const double contraction = std::pow(1 - cfg.step_size, double(out.inner_length));
    CHECK((out.x_out - contraction * x0).norm() <= 1e-12 * std::max(1.0, x0.norm()));
  }
}

TEST_CASE("inner correction is unbiased for the full gradient") {
  auto p = quartic_fs(4, 16, 0.5, 21);
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector<double> x0 = random_box_point(4, 1.5, rng);
    const Vector<double> x = random_box_point(4, 1.5, rng);
    const Vector<double> g = flash::full_gradient(*p, x0);
    Vector<double> acc = Vector<double>::Zero(4);
    for (flash::Index i = 0; i < 16; ++i) {
      const auto id = static_cast<std::uint64_t>(i);
      acc += p->component_gradient(id, x) - p->component_gradient(id, x0) + g;
    }
    CHECK((acc / 16 - p->gradient(x)).norm() <= 1e-12);
  }
}

TEST_CASE("epoch cost is the anchor plus two gradients per inner sample") {
  auto p = quartic_fs(3, 12, 0.3, 5);
  ScsgConfig<double> cfg = ScsgConfig<double>::from_constants(11.0, 12, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    EvalCounters c;
    const auto out = flash::scsg_epoch<double>(*p, Vector<double>::Zero(3), cfg, nullptr, rng, &c);
    CHECK(out.consumed.grad_evals == 12 + 6 * out.inner_length);
    CHECK(out.consumed.hvp_evals == 0);
    CHECK(c == out.consumed);
  }
}

TEST_CASE("anchored and self-anchored epochs coincide at full batch") {
  // at B = n the subsampled anchor short-circuits to the deterministic full
  // pass and consumes no randomness, so the two entry points agree exactly
  auto p = quartic_fs(3, 12, 0.3, 5);
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 12, 1);
  Rng scan(6);
  const Vector<double> x0 = random_box_point(3, 1.5, scan);
  const Vector<double> g = flash::full_gradient(*p, x0);
  Rng r1(42), r2(42);
  EvalCounters c1, c2;
  const auto with_anchor = flash::scsg_epoch<double>(*p, x0, cfg, &g, r1, &c1);
  const auto self = flash::scsg_epoch<double>(*p, x0, cfg, nullptr, r2, &c2);
  CHECK(with_anchor.inner_length == self.inner_length);
  CHECK((with_anchor.x_out.array() == self.x_out.array()).all());
  CHECK(c2.grad_evals - c1.grad_evals == 12);
}

TEST_CASE("pathological epoch lengths are capped and flagged") {
  auto p = quartic_fs(2, 4, 0.2, 7);
  ScsgConfig<double> cfg = ScsgConfig<double>::from_constants(11.0, 4, 1);
  cfg.cap_factor = 1;  // cap T at 4 to make capping observable
  bool capped = false;
  for (std::uint64_t seed = 0; seed < 100 && !capped; ++seed) {
    Rng rng(seed);
    const auto out = flash::scsg_epoch<double>(*p, Vector<double>::Zero(2), cfg, nullptr, rng);
    if (out.length_capped) {
      CHECK(out.inner_length == 4);
      capped = true;
    } else {
      CHECK(out.inner_length <= 4);
    }
  }
  CHECK(capped);
}

TEST_CASE("realized epoch lengths average to B over b") {
  auto p = quartic_fs(2, 20, 0.3, 13);
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 20, 1);
  Rng rng(15);
  std::vector<double> lengths;
  const Vector<double> x0 = random_box_point(2, 1.0, rng);
  for (int i = 0; i < 10000; ++i) {
    const auto out = flash::scsg_epoch<double>(*p, x0, cfg, nullptr, rng);
    lengths.push_back(static_cast<double>(out.inner_length));
  }
  const double mean = flash::mean_of(lengths);
  const double se = flash::standard_error(lengths);
  CHECK(std::abs(mean - 20.0) <= 3 * se);
}

TEST_CASE("multi-epoch runs are reproducible and select a visited iterate") {
  auto p = quartic_fs(4, 25, 0.4, 17);
  ScsgConfig<double> cfg = ScsgConfig<double>::from_constants(11.0, 25, 1);
  cfg.num_epochs = 6;
  Rng scan(8);
  const Vector<double> x0 = random_box_point(4, 1.5, scan);
  Rng r1(77), r2(77);
  EvalCounters c1;
  const auto a = flash::scsg_run<double>(*p, x0, cfg, r1, &c1);
  const auto b = flash::scsg_run<double>(*p, x0, cfg, r2);
  CHECK(a.epochs_run == 6);
  CHECK((a.x_final.array() == b.x_final.array()).all());
  CHECK((a.x_selected.array() == b.x_selected.array()).all());
  CHECK(a.selected_epoch == b.selected_epoch);
  CHECK(a.selected_epoch >= 1);
  CHECK(a.selected_epoch <= 6);
  CHECK(c1.grad_evals == a.consumed.grad_evals);
  CHECK(a.consumed.grad_evals >= 6 * 25);

  ScsgConfig<double> one = cfg;
  one.num_epochs = 1;
  Rng r3(77);
  const auto single = flash::scsg_run<double>(*p, x0, one, r3);
  CHECK(single.selected_epoch == 1);
  CHECK((single.x_selected.array() == single.x_final.array()).all());
}

TEST_CASE("epoch chains drive the quartic gradient below the target") {
  auto p = quartic_fs(10, 100, 0.2, 19);
  ScsgConfig<double> cfg = ScsgConfig<double>::from_constants(11.0, 100, 1);
  cfg.num_epochs = 200;
  int converged = 0;
  const int runs = 20;
  for (int r = 0; r < runs; ++r) {
    Rng rng(3000 + static_cast<std::uint64_t>(r));
    Vector<double> x0 = random_box_point(10, 1.5, rng);
    const auto out = flash::scsg_run<double>(*p, x0, cfg, rng);
    if (p->gradient(out.x_final).norm() <= 0.05) ++converged;
  }
  CHECK(converged >= 18);
}

TEST_CASE("progress report reproduces the frozen bound values") {
  // rate at L1 = 11, B = n = 1000, b = 1: 5 L1 / (1/6) * (1/1000)^(1/3) = 33,
  // so a 0.02 mean decrease allows mean squared gradient 0.66
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 1000, 1);
  flash::SmoothnessConstants<double> consts;
  consts.grad_lipschitz = 11;
  consts.hessian_lipschitz = 12;
  consts.third_order_lipschitz = 6;
  consts.optimal_gap = 1;
  std::vector<flash::EpochSample<double>> samples(40);
  for (auto& s : samples) {
    s.f_start = 1.0;
    s.f_end = 0.98;
    s.grad_sq = 0.5;
  }
  const auto rep = flash::epoch_progress_check<double>(samples, cfg, consts, 1000);
  CHECK(rep.asserted);
  CHECK(rep.rate == doctest::Approx(33.0).epsilon(1e-12));
  CHECK(rep.rate * rep.mean_decrease == doctest::Approx(0.66).epsilon(1e-12));
  CHECK(rep.additive == 0.0);
  CHECK(rep.pass);

  // additive term with a variance bound of 4 (sigma^2-bound 2) at B = 317
  auto cfg2 = ScsgConfig<double>::from_constants(11.0, 317, 1);
  flash::SmoothnessConstants<double> c2 = consts;
  c2.noise_sigma = std::sqrt(2.0);
  c2.variance_bound = 4.0;
  const auto rep2 = flash::epoch_progress_check<double>(samples, cfg2, c2, 0);
  CHECK(rep2.additive == doctest::Approx(24.0 / 317.0).epsilon(1e-12));
  CHECK(rep2.additive == doctest::Approx(0.0757).epsilon(1e-3));
}

TEST_CASE("progress report flags a violated bound") {
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 1000, 1);
  flash::SmoothnessConstants<double> consts;
  consts.grad_lipschitz = 11;
  consts.hessian_lipschitz = 12;
  consts.third_order_lipschitz = 6;
  consts.optimal_gap = 1;
  std::vector<flash::EpochSample<double>> samples(40);
  Rng rng(23);
  for (auto& s : samples) {
    s.f_start = 1.0;
    s.f_end = 0.98;
    s.grad_sq = 5.0 + 0.01 * rng.uniform();  // far above 0.66
  }
  const auto rep = flash::epoch_progress_check<double>(samples, cfg, consts, 1000);
  CHECK(rep.asserted);
  CHECK_FALSE(rep.pass);
  CHECK(rep.mean_margin > rep.slack);
}

TEST_CASE("progress report refuses rather than passing vacuously") {
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 1000, 1);
  flash::SmoothnessConstants<double> consts;
  consts.grad_lipschitz = 11;
  consts.hessian_lipschitz = 12;
  consts.third_order_lipschitz = 6;
  consts.optimal_gap = 1;
  std::vector<flash::EpochSample<double>> few(29);
  for (auto& s : few) s.f_start = 1.0, s.f_end = 0.9, s.grad_sq = 0.01;
  const auto r1 = flash::epoch_progress_check<double>(few, cfg, consts, 1000);
  CHECK_FALSE(r1.asserted);
  CHECK(r1.reason.find("30") != std::string::npos);

  std::vector<flash::EpochSample<double>> enough(40);
  for (auto& s : enough) s.f_start = 1.0, s.f_end = 0.9, s.grad_sq = 0.01;
  auto small = ScsgConfig<double>::from_constants(11.0, 8, 1);
  const auto r2 = flash::epoch_progress_check<double>(enough, small, consts, 1000);
  CHECK_FALSE(r2.asserted);
  CHECK(r2.reason.find("outer_batch") != std::string::npos);

  auto hot = ScsgConfig<double>::from_constants(11.0, 1000, 1);
  hot.step_size *= 2;  // ratio 1/3 > 1/6
  const auto r3 = flash::epoch_progress_check<double>(enough, hot, consts, 1000);
  CHECK_FALSE(r3.asserted);
  CHECK(r3.reason.find("1/6") != std::string::npos);
}

TEST_CASE("observed epochs satisfy the progress bound end to end") {
  // full-batch anchor on a finite sum
  auto p = quartic_fs(5, 64, 0.4, 29);
  const auto cfg = ScsgConfig<double>::from_constants(11.0, 64, 1);
  Rng rng(27);
  std::vector<flash::EpochSample<double>> samples;
  for (int i = 0; i < 100; ++i) {
    const Vector<double> x0 = random_box_point(5, 1.5, rng);
    const auto out = flash::scsg_epoch<double>(*p, x0, cfg, nullptr, rng);
    flash::EpochSample<double> s;
    s.f_start = p->value(x0);
    s.f_end = p->value(out.x_out);
    s.grad_sq = p->gradient(out.x_out).squaredNorm();
    samples.push_back(s);
  }
  const auto rep = flash::epoch_progress_check<double>(samples, cfg, p->constants(), 64);
  CHECK(rep.asserted);
  CHECK(rep.additive == 0.0);
  CHECK(rep.pass);

  // subsampled anchor on a streaming problem pays the additive term
  auto st = flash::make_stochastic_problem<double>(flash::TestProblemName::SeparableQuartic, 5,
                                                   0.5, 31);
  const auto cfg2 = ScsgConfig<double>::from_constants(11.0, 100, 1);
  std::vector<flash::EpochSample<double>> samples2;
  for (int i = 0; i < 100; ++i) {
    const Vector<double> x0 = random_box_point(5, 1.5, rng);
    const auto out = flash::scsg_epoch<double>(*st, x0, cfg2, nullptr, rng);
    flash::EpochSample<double> s;
    s.f_start = st->value(x0);
    s.f_end = st->value(out.x_out);
    s.grad_sq = st->gradient(out.x_out).squaredNorm();
    samples2.push_back(s);
  }
  const auto rep2 = flash::epoch_progress_check<double>(samples2, cfg2, st->constants(), 0);
  CHECK(rep2.asserted);
  CHECK(rep2.additive == doctest::Approx(6 * st->constants().variance_bound / 100).epsilon(1e-12));
  CHECK(rep2.pass);
}
