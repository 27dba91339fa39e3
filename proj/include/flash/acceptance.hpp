#pragma once

// Release gate: every check the artifact must pass before it ships, each one
// backed by an exact-oracle ground truth (dense eigensolver, analytic
// landmark values, or certified expectation bounds with 99% statistical
// slack).  The `repro` CLI subcommand and the `acceptance` test binary both
// run exactly this code.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flash/experiments.hpp"

namespace flash::acceptance {

struct CriterionResult {
  std::string name;
  bool pass = false;
  double seconds = 0;
  std::string detail;
};

namespace detail {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

inline Targets<double> gate_targets(const SmoothnessConstants<double>& c, double eps,
                                    double eps_h, double delta = -1) {
  Targets<double> t;
  t.grad_tol = eps;
  t.curvature_tol = eps_h;
  t.failure_prob = delta > 0 ? delta : default_failure_prob(c, eps_h);
  t.concentration_prob = 0.01;
  return t;
}

}  // namespace detail

// Gate 1: analytic derivatives against central finite differences, every
// built-in problem, both access models, 100 random points each.
inline CriterionResult derivative_soundness() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "derivative-soundness";
  const auto summaries = run_derivative_checks(1e-5, 100, 2026, 10, 64);
  double worst = 0;
  r.pass = true;
  for (const auto& s : summaries) {
    worst = std::max({worst, s.max_gradient_error, s.max_hvp_error, s.max_component_error});
    r.pass = r.pass && s.pass;
  }
  r.detail = std::to_string(summaries.size()) + " problems x 100 points, worst rel err " +
             detail::fmt(worst, 3);
  r.seconds = timer.seconds();
  return r;
}

// Gate 2: negative-curvature finder contract.  At dense-certified curved
// points every flavor must return a sound direction at the advertised rate;
// at dense-certified benign points it must return bot at the same rate.
inline CriterionResult nc_contract() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "nc-contract";
  const double eps_h = 0.5, delta = 0.1;
  const int trials_per_cell = 12;
  const Index dims[] = {2, 10, 50};
  const TestProblemName probs[] = {TestProblemName::SeparableQuartic,
                                   TestProblemName::CoupledSaddle};

  long long dir_trials = 0, dir_hits = 0, bot_trials = 0, bot_hits = 0;
  // most positive curvature among accepted directions
  double worst_rayleigh = -std::numeric_limits<double>::infinity();
  bool soundness_ok = true, oracle_ok = true;
  std::uint64_t cell = 0;

  // flavor 0: full-oracle power iteration, 1: gradient-difference probes,
  // 2: streaming sampled iteration
  for (int flavor = 0; flavor < 3; ++flavor) {
    for (const auto prob_name : probs) {
      for (const Index d : dims) {
        std::shared_ptr<Problem<double>> p;
        if (flavor == 2)
          p = make_stochastic_problem<double>(prob_name, d, 0.3, 91);
        else
          p = make_finite_sum_problem<double>(prob_name, d, 60, 0.3, 91);
        const auto& consts = p->constants();
        const auto targets = detail::gate_targets(consts, 0.1, eps_h, delta);
        NcConfig nc;
        nc.method = flavor == 0   ? NcMethod::HvpPower
                    : flavor == 1 ? NcMethod::GradientOnly
                                  : NcMethod::Oja;
        nc.minibatch = 5;

        const Vector<double> x = Vector<double>::Zero(d);
        const double lam =
            dense_eigensolve<double>(dense_hessian(*p, x)).min_eigenvalue();
        if (!(lam <= -eps_h)) oracle_ok = false;

        for (int t = 0; t < trials_per_cell; ++t) {
          Rng rng(7000 + cell * 997 + static_cast<std::uint64_t>(t));
          EvalCounters counters;
          ++dir_trials;
          try {
            const auto out = flavor == 2
                                 ? approx_nc_streaming(*p, x, consts, targets, nc, rng, &counters)
                                 : approx_nc_full(*p, x, consts, targets, nc, rng, &counters);
            if (!out.is_bot()) {
              EvalCounters scratch;
              const double rho = rayleigh_quotient(*p, x, out.direction, &scratch);
              if (rho > -eps_h / 2 + 1e-8) soundness_ok = false;
              worst_rayleigh = std::max(worst_rayleigh, rho);
              ++dir_hits;
            }
          } catch (const InconclusiveError&) {
          }
        }
        ++cell;
      }
    }
  }

  // benign points: the quartic minimizer (curvature +2) and the shifted point
  // with exact curvature -0.2, both above the -eps_h/2 line
  const double shifted = std::sqrt(0.8 / 3.0);
  for (int flavor = 0; flavor < 3; ++flavor) {
    for (const double level : {1.0, shifted}) {
      for (const Index d : dims) {
        std::shared_ptr<Problem<double>> p;
        if (flavor == 2)
          p = make_stochastic_problem<double>(TestProblemName::SeparableQuartic, d, 0.3, 91);
        else
          p = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, d, 60, 0.3, 91);
        const auto& consts = p->constants();
        const auto targets = detail::gate_targets(consts, 0.1, eps_h, delta);
        NcConfig nc;
        nc.method = flavor == 0   ? NcMethod::HvpPower
                    : flavor == 1 ? NcMethod::GradientOnly
                                  : NcMethod::Oja;
        nc.minibatch = 5;

        const Vector<double> x = Vector<double>::Constant(d, level);
        const double lam =
            dense_eigensolve<double>(dense_hessian(*p, x)).min_eigenvalue();
        if (!(lam >= -eps_h / 2)) oracle_ok = false;

        for (int t = 0; t < trials_per_cell; ++t) {
          Rng rng(90000 + cell * 997 + static_cast<std::uint64_t>(t));
          EvalCounters counters;
          ++bot_trials;
          try {
            const auto out = flavor == 2
                                 ? approx_nc_streaming(*p, x, consts, targets, nc, rng, &counters)
                                 : approx_nc_full(*p, x, consts, targets, nc, rng, &counters);
            if (out.is_bot()) ++bot_hits;
          } catch (const InconclusiveError&) {
          }
        }
        ++cell;
      }
    }
  }

  const bool dir_rate_ok = rate_consistent_with(dir_hits, dir_trials, 1 - delta, 0.01);
  const bool bot_rate_ok = rate_consistent_with(bot_hits, bot_trials, 1 - delta, 0.01);
  r.pass = oracle_ok && soundness_ok && dir_rate_ok && bot_rate_ok && dir_trials >= 200 &&
           bot_trials >= 200;
  r.detail = "direction " + std::to_string(dir_hits) + "/" + std::to_string(dir_trials) +
             ", bot " + std::to_string(bot_hits) + "/" + std::to_string(bot_trials) +
             ", worst accepted rayleigh " + detail::fmt(worst_rayleigh, 3);
  r.seconds = timer.seconds();
  return r;
}

// Gate 3: certified per-step decrease of the third-order curvature step at
// the quartic saddle (sign-averaged, 1000 trials, 99% slack).
inline CriterionResult decrement_bound() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "decrement-bound";
  auto p = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, 10, 100, 0.3, 17);
  const auto& consts = p->constants();
  const auto targets = detail::gate_targets(consts, 0.1, 0.5, 0.1);
  NcConfig nc;
  Rng rng(2026);
  const Vector<double> origin = Vector<double>::Zero(10);
  const auto rep = decrement_experiment(*p, origin, consts, targets, 1000, nc, rng,
                                        /*streaming_finder=*/false, /*with_baseline=*/false);
  r.pass = rep.bound_ok && rep.rate_ok && rep.excluded == 0;
  r.detail = "mean " + detail::fmt(rep.mean) + " >= bound " + detail::fmt(rep.bound) +
             " - 2.58 x " + detail::fmt(rep.std_error, 3) + ", nc success " +
             detail::fmt(rep.nc_success_rate, 4);
  r.seconds = timer.seconds();
  return r;
}

// Gate 4: the third-order step must beat the quadratic-smoothness baseline
// by at least an order of magnitude in mean per-step decrease.
inline CriterionResult third_order_advantage() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "third-order-advantage";
  auto p = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, 10, 100, 0.3, 17);
  const auto& consts = p->constants();
  const auto targets = detail::gate_targets(consts, 0.1, 0.5, 0.1);
  NcConfig nc;
  Rng rng(2027);
  const Vector<double> origin = Vector<double>::Zero(10);
  const auto rep = decrement_experiment(*p, origin, consts, targets, 400, nc, rng);
  r.pass = rep.ratio >= 10 && !rep.baseline_decrements.empty();
  r.detail = "mean ratio " + detail::fmt(rep.ratio) + " (third-order " + detail::fmt(rep.mean) +
             " vs baseline " + detail::fmt(rep.baseline_mean, 3) + ")";
  r.seconds = timer.seconds();
  return r;
}

// Gate 5: per-epoch variance-reduced progress bound, finite-sum and
// streaming access, 100 epochs each.
inline CriterionResult epoch_bound() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "epoch-bound";

  auto run_side = [](const Problem<double>& p, Index finite_sum_n, Index outer_batch) {
    const auto& consts = p.constants();
    const auto cfg =
        ScsgConfig<double>::from_constants(consts.grad_lipschitz, outer_batch, 1);
    std::vector<EpochSample<double>> samples;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      Vector<double> x = Vector<double>::Constant(p.dimension(), 1.5);
      for (int e = 0; e < 20; ++e) {
        EpochSample<double> s;
        s.f_start = p.value(x);
        const auto ep = scsg_epoch<double>(p, x, cfg, nullptr, rng, nullptr);
        x = ep.x_out;
        s.f_end = p.value(x);
        s.grad_sq = p.gradient(x).squaredNorm();
        samples.push_back(s);
      }
    }
    return epoch_progress_check(samples, cfg, consts, finite_sum_n);
  };

  auto fs = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, 10, 1000, 0.3, 23);
  const auto fs_report = run_side(*fs, 1000, 1000);

  auto st = make_stochastic_problem<double>(TestProblemName::SeparableQuartic, 10, 1.0, 23);
  const Index b_st = stochastic_anchor_batch<double>(st->constants().noise_sigma, 0.25, 0.01);
  const auto st_report = run_side(*st, 0, b_st);

  r.pass = fs_report.asserted && fs_report.pass && st_report.asserted && st_report.pass;
  r.detail = "finite-sum mean grad^2 " + detail::fmt(fs_report.mean_grad_sq, 3) + " vs rhs " +
             detail::fmt(fs_report.rate * fs_report.mean_decrease + fs_report.additive, 3) +
             "; streaming (B=" + std::to_string(b_st) + ") " +
             detail::fmt(st_report.mean_grad_sq, 3) + " vs rhs " +
             detail::fmt(st_report.rate * st_report.mean_decrease + st_report.additive, 3);
  r.seconds = timer.seconds();
  return r;
}

// Gate 6: end-to-end second-order stationarity from the saddle, both
// drivers, 20 seeds each, plus the paired evaluation-cost comparison.
inline CriterionResult end_to_end() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "end-to-end-sosp";

  auto fs = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, 10, 100, 0.3, 7);
  const auto fs_targets = detail::gate_targets(fs->constants(), 1e-2, 0.1);
  const Vector<double> origin = Vector<double>::Zero(10);
  FlashConfig cfg;
  int fs_ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto rec = flash_finite_sum(*fs, origin, fs->constants(), fs_targets, cfg, rng);
    if (rec.termination == Termination::BotReturned &&
        certify_sosp(*fs, rec.final_point, fs_targets).pass)
      ++fs_ok;
  }

  auto st = make_stochastic_problem<double>(TestProblemName::SeparableQuartic, 10, 1.0, 7);
  const auto st_targets = detail::gate_targets(st->constants(), 0.25, 0.35);
  FlashConfig st_cfg;
  st_cfg.nc.minibatch = 5;
  int st_ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto rec = flash_stochastic(*st, origin, st->constants(), st_targets, st_cfg, rng);
    if (rec.termination == Termination::BotReturned &&
        certify_sosp(*st, rec.final_point, st_targets).pass)
      ++st_ok;
  }

  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto adv = eval_advantage_experiment(*fs, origin, fs->constants(), fs_targets, cfg, seeds);

  r.pass = fs_ok >= 18 && st_ok >= 18 && adv.advantage;
  r.detail = "finite-sum certified " + std::to_string(fs_ok) + "/20, streaming certified " +
             std::to_string(st_ok) + "/20, paired grad-cost medians " +
             detail::fmt(adv.median_ncd3, 6) + " vs " + detail::fmt(adv.median_ncd2, 6) +
             " (sign test p " + detail::fmt(adv.p_value, 3) + ")";
  r.seconds = timer.seconds();
  return r;
}

// Gate 7: structural invariants of the run machinery.
inline CriterionResult structural_invariants() {
  detail::Timer timer;
  CriterionResult r;
  r.name = "structural-invariants";
  std::vector<std::string> failures;

  // counter audit + phase bookkeeping on a real run
  auto p = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, 6, 30, 0.3, 5);
  const auto targets = detail::gate_targets(p->constants(), 0.05, 0.5);
  FlashConfig cfg;
  const Vector<double> origin = Vector<double>::Zero(6);
  Rng rng(41);
  const auto rec = flash_finite_sum(*p, origin, p->constants(), targets, cfg, rng);
  std::string why;
  if (!audit_run(rec, 1, &why)) failures.push_back("counter audit: " + why);
  if (rec.termination != Termination::BotReturned) failures.push_back("run did not bot-return");

  // seed determinism: bitwise identical replay
  {
    Rng r1(42), r2(42);
    const auto a = flash_finite_sum(*p, origin, p->constants(), targets, cfg, r1);
    const auto b = flash_finite_sum(*p, origin, p->constants(), targets, cfg, r2);
    if (!(a.final_point.array() == b.final_point.array()).all() || !(a.totals == b.totals))
      failures.push_back("seed determinism violated");
  }

  // geometric epoch-length sampler distribution
  {
    Rng gr(43);
    std::vector<std::int64_t> draws;
    draws.reserve(100000);
    for (int i = 0; i < 100000; ++i)
      draws.push_back(geometric_sample(0.9, gr));
    const auto chi = chi_square_geometric(draws, 0.9);
    if (!chi.pass) failures.push_back("geometric sampler chi-square rejected");
  }

  // anchor-step identity: a length-one epoch moves exactly minus step times
  // the anchor gradient
  {
    auto q = make_finite_sum_problem<double>(TestProblemName::SeparableQuartic, 4, 12, 0.3, 9);
    const auto cfg1 = ScsgConfig<double>::from_constants(q->constants().grad_lipschitz, 12, 1);
    Vector<double> x0(4);
    x0 << 0.7, -0.3, 1.1, 0.2;
    EvalCounters scratch;
    const Vector<double> anchor = full_gradient(*q, x0, &scratch);
    bool found = false;
    for (std::uint64_t seed = 1; seed <= 200 && !found; ++seed) {
      Rng er(seed);
      const auto ep = scsg_epoch<double>(*q, x0, cfg1, &anchor, er, nullptr);
      if (ep.inner_length != 1) continue;
      found = true;
      const Vector<double> want = x0 - cfg1.step_size * anchor;
      if ((ep.x_out - want).norm() > 1e-12) failures.push_back("anchor-step identity violated");
    }
    if (!found) failures.push_back("no length-one epoch found in 200 seeds");
  }

  // sign symmetry of the curvature step direction
  {
    Rng sr(44);
    int plus = 0;
    for (int i = 0; i < 1000; ++i)
      if (sr.rademacher() > 0) ++plus;
    if (std::abs(plus - 500) > 41) failures.push_back("sign draw imbalance: " + std::to_string(plus));
  }

  r.pass = failures.empty();
  r.detail = failures.empty() ? "audit, determinism, sampler, step identity, sign balance"
                              : failures.front();
  r.seconds = timer.seconds();
  return r;
}

inline int run_all(std::ostream& out) {
  std::vector<CriterionResult> results;
  results.push_back(derivative_soundness());
  results.push_back(nc_contract());
  results.push_back(decrement_bound());
  results.push_back(third_order_advantage());
  results.push_back(epoch_bound());
  results.push_back(end_to_end());
  results.push_back(structural_invariants());

  int failures = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& c = results[i];
    if (!c.pass) ++failures;
    out << (c.pass ? "[PASS] " : "[FAIL] ") << "A" << (i + 1) << " " << c.name << " ("
        << detail::fmt(c.seconds, 3) << " s): " << c.detail << "\n";
  }
  out << "acceptance: " << (results.size() - static_cast<std::size_t>(failures)) << "/"
      << results.size() << " criteria passed\n";
  return failures;
}

}  // namespace flash::acceptance
