#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flash/descent.hpp"
#include "flash/eigensolve.hpp"
#include "flash/negcurve.hpp"
#include "flash/problem.hpp"
#include "flash/scsg.hpp"

namespace flash {

// Outer driver.  Each outer iteration computes an anchor gradient g_k; while
// ||g_k|| is above the threshold it runs one variance-reduced epoch, and once
// the gradient is small it asks the curvature finder for a descent direction.
// A bot answer means both conditions of a second-order stationary point hold
// (up to the failure probability) at the current iterate, so the driver stops
// there.  The finite-sum driver anchors on the exact full gradient with
// threshold grad_tol; the streaming driver anchors on a concentration-sized
// batch and halves the threshold to absorb anchor noise.

enum class Phase { ScsgEpoch, Ncd3, Terminate };
enum class Termination { BotReturned, OuterBudgetExhausted, Aborted };
enum class DescentVariant { ThirdOrder, QuadraticBaseline };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::ScsgEpoch: return "scsg-epoch";
    case Phase::Ncd3: return "ncd3";
    case Phase::Terminate: return "terminate";
  }
  return "?";
}

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::BotReturned: return "bot-returned";
    case Termination::OuterBudgetExhausted: return "K-exhausted";
    case Termination::Aborted: return "aborted";
  }
  return "?";
}

inline DescentVariant parse_descent_variant(std::string_view s) {
  if (s == "ncd3") return DescentVariant::ThirdOrder;
  if (s == "ncd2") return DescentVariant::QuadraticBaseline;
  throw std::invalid_argument("unknown descent variant: " + std::string(s));
}

template <typename Scalar>
struct OuterIteration {
  Index k = 0;  // 1-based
  Phase phase = Phase::Terminate;
  Scalar anchor_grad_norm = 0;
  // Counter snapshots after the iteration, plus the attribution needed to
  // re-derive them: anchor batch size, epoch inner length, and the curvature
  // finder's consumption inside this iteration.
  long long tg_after = 0;
  long long th_after = 0;
  long long anchor_cost = 0;
  Index inner_length = 0;
  long long nc_grad_cost = 0;
  long long nc_hvp_cost = 0;
  bool projected = false;
};

template <typename Scalar>
struct RunRecord {
  std::vector<OuterIteration<Scalar>> iterations;
  Vector<Scalar> final_point;
  Termination termination = Termination::OuterBudgetExhausted;
  std::string abort_reason;
  EvalCounters totals;
  Index epochs = 0;
  Index curvature_steps = 0;  // accepted curvature moves
  Index nc_calls = 0;         // finder invocations, including the final bot
  Index projections = 0;
};

struct FlashConfig {
  NcConfig nc;
  SignRule sign_rule = SignRule::Rademacher;
  DescentVariant variant = DescentVariant::ThirdOrder;
  Index max_outer = 0;    // 0: use default_outer_cap
  Index cap_factor = 50;  // epoch length cap passthrough
};

// Worst-case outer iteration count: enough curvature steps to spend the whole
// objective gap at the guaranteed per-step decrease, plus enough epochs to do
// the same against the epoch progress rate at gradient norm grad_tol.
template <typename Scalar>
Index default_outer_cap(const SmoothnessConstants<Scalar>& c, const Targets<Scalar>& t,
                        Index anchor_batch) {
  const double curvature_steps = 16.0 * double(c.third_order_lipschitz) *
                                 double(c.optimal_gap) /
                                 (double(t.curvature_tol) * double(t.curvature_tol));
  const double epoch_steps = 2880.0 * double(c.grad_lipschitz) * double(c.optimal_gap) /
                             (std::cbrt(double(anchor_batch)) * double(t.grad_tol) *
                              double(t.grad_tol));
  return static_cast<Index>(std::ceil(curvature_steps)) +
         static_cast<Index>(std::ceil(epoch_steps));
}

// Anchor batch size making the subsampled gradient concentrate to within
// grad_tol / 4 with probability 1 - concentration_prob:
//   B = ceil( 2 sigma^2 / (grad_tol/4)^2 * (1 + sqrt(log(1/concentration_prob)))^2 )
template <typename Scalar>
Index stochastic_anchor_batch(Scalar sigma, Scalar grad_tol, Scalar concentration_prob) {
  if (!(sigma > 0)) throw std::invalid_argument("stochastic_anchor_batch: sigma must be positive");
  const double dev = double(grad_tol) / 4.0;
  const double boost = 1.0 + std::sqrt(std::log(1.0 / double(concentration_prob)));
  const double raw = 2.0 * double(sigma) * double(sigma) / (dev * dev) * boost * boost;
  return static_cast<Index>(std::ceil(raw));
}

namespace detail {

// Anchor: (x, counters) -> batch gradient.  Finder: (x, rng, counters) ->
// NcOutcome.  Both charge the run's counters so the per-iteration snapshots
// in the log stay exact.
template <typename Scalar, typename Anchor, typename Finder>
RunRecord<Scalar> flash_drive(const Problem<Scalar>& p, Vector<Scalar> x,
                              const SmoothnessConstants<Scalar>& consts,
                              const Targets<Scalar>& targets, Scalar threshold,
                              const ScsgConfig<Scalar>& epoch_config, Index max_outer,
                              const FlashConfig& config, Anchor&& anchor_gradient,
                              Finder&& finder, Rng& rng) {
  RunRecord<Scalar> record;
  const auto dom = p.domain();
  if (dom.project(x)) ++record.projections;

  auto counted_finder = [&](const Vector<Scalar>& at, Rng& r) {
    return finder(at, r, record.totals);
  };

  for (Index k = 1; k <= max_outer; ++k) {
    OuterIteration<Scalar> it;
    it.k = k;
    const long long tg_before = record.totals.grad_evals;

    const Vector<Scalar> g = anchor_gradient(x, record.totals);
    it.anchor_cost = record.totals.grad_evals - tg_before;
    it.anchor_grad_norm = g.norm();

    if (it.anchor_grad_norm > threshold) {
      EpochOutput<Scalar> epoch = scsg_epoch(p, x, epoch_config, &g, rng, &record.totals);
      x = std::move(epoch.x_out);
      it.projected = dom.project(x);
      it.phase = Phase::ScsgEpoch;
      it.inner_length = epoch.inner_length;
      ++record.epochs;
    } else {
      const EvalCounters nc_before = record.totals;
      ++record.nc_calls;
      StepResult<Scalar> step;
      bool aborted = false;
      try {
        step = config.variant == DescentVariant::ThirdOrder
                   ? ncd3_step(p, x, consts, targets, counted_finder, rng, config.sign_rule)
                   : ncd2_baseline_step(p, x, consts, targets, counted_finder, rng);
      } catch (const InconclusiveError& e) {
        aborted = true;
        record.termination = Termination::Aborted;
        record.abort_reason = e.what();
      }
      const EvalCounters nc_cost = record.totals - nc_before;
      it.nc_grad_cost = nc_cost.grad_evals;
      it.nc_hvp_cost = nc_cost.hvp_evals;

      if (aborted || !step.moved) {
        it.phase = Phase::Terminate;
        it.tg_after = record.totals.grad_evals;
        it.th_after = record.totals.hvp_evals;
        record.iterations.push_back(it);
        if (!aborted) record.termination = Termination::BotReturned;
        record.final_point = std::move(x);
        return record;
      }
      x = std::move(step.y);
      it.projected = dom.project(x);
      it.phase = Phase::Ncd3;
      ++record.curvature_steps;
    }

    if (it.projected) ++record.projections;
    it.tg_after = record.totals.grad_evals;
    it.th_after = record.totals.hvp_evals;
    record.iterations.push_back(it);
  }

  record.termination = Termination::OuterBudgetExhausted;
  record.final_point = std::move(x);
  return record;
}

}  // namespace detail

// Finite-sum driver: exact full-gradient anchors, threshold grad_tol,
// epoch batches (B, b) = (n, 1).  Constants are passed explicitly so a caller
// can run with deliberately loosened (still valid) bounds.
template <typename Scalar>
RunRecord<Scalar> flash_finite_sum(const FiniteSumProblem<Scalar>& p, const Vector<Scalar>& x0,
                                   const SmoothnessConstants<Scalar>& consts,
                                   const Targets<Scalar>& targets, const FlashConfig& config,
                                   Rng& rng) {
  targets.validate();
  consts.validate();
  const Index n = p.num_components();

  ScsgConfig<Scalar> epoch_config =
      ScsgConfig<Scalar>::from_constants(consts.grad_lipschitz, n, 1);
  epoch_config.cap_factor = config.cap_factor;
  const Index max_outer =
      config.max_outer > 0 ? config.max_outer : default_outer_cap(consts, targets, n);

  auto anchor = [&](const Vector<Scalar>& at, EvalCounters& counters) {
    return full_gradient(p, at, &counters);
  };
  auto finder = [&](const Vector<Scalar>& at, Rng& r, EvalCounters& counters) {
    return approx_nc_full(p, at, consts, targets, config.nc, r, &counters);
  };
  return detail::flash_drive(p, x0, consts, targets, targets.grad_tol, epoch_config,
                             max_outer, config, anchor, finder, rng);
}

// Streaming driver: concentration-sized subsampled anchors, threshold
// grad_tol / 2, epoch batches (B, b) = (anchor batch, 1).
template <typename Scalar>
RunRecord<Scalar> flash_stochastic(const Problem<Scalar>& p, const Vector<Scalar>& x0,
                                   const SmoothnessConstants<Scalar>& consts,
                                   const Targets<Scalar>& targets, const FlashConfig& config,
                                   Rng& rng) {
  targets.validate();
  consts.validate();
  const Index batch =
      stochastic_anchor_batch(consts.noise_sigma, targets.grad_tol, targets.concentration_prob);

  ScsgConfig<Scalar> epoch_config =
      ScsgConfig<Scalar>::from_constants(consts.grad_lipschitz, batch, 1);
  epoch_config.cap_factor = config.cap_factor;
  const Index max_outer =
      config.max_outer > 0 ? config.max_outer : default_outer_cap(consts, targets, batch);

  // hvp-power needs the mean oracle, which a streaming run does not have;
  // map the (finite-sum oriented) default onto the streaming equivalent.
  NcConfig nc = config.nc;
  if (nc.method == NcMethod::HvpPower) nc.method = NcMethod::Oja;

  auto anchor = [&](const Vector<Scalar>& at, EvalCounters& counters) {
    return subsampled_gradient(p, at, batch, rng, &counters);
  };
  auto finder = [&](const Vector<Scalar>& at, Rng& r, EvalCounters& counters) {
    return approx_nc_streaming(p, at, consts, targets, nc, r, &counters);
  };
  return detail::flash_drive(p, x0, consts, targets, targets.grad_tol / 2, epoch_config,
                             max_outer, config, anchor, finder, rng);
}

// Consistency audit of a run log: counter snapshots must be monotone, each
// iteration's consumption must decompose exactly into anchor + inner epoch
// steps + curvature finder work, epoch and curvature activity must never
// appear in the same iteration, and the recorded totals and phase counts must
// match the log.
template <typename Scalar>
bool audit_run(const RunRecord<Scalar>& record, Index inner_batch, std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  long long tg = 0, th = 0;
  Index epochs = 0, steps = 0, finder_calls = 0;
  for (const auto& it : record.iterations) {
    if (it.tg_after < tg || it.th_after < th)
      return fail("counter snapshots are not monotone");
    if (it.phase == Phase::ScsgEpoch && (it.nc_grad_cost != 0 || it.nc_hvp_cost != 0))
      return fail("epoch iteration shows curvature finder work");
    if (it.phase != Phase::ScsgEpoch && it.inner_length != 0)
      return fail("non-epoch iteration shows inner epoch steps");
    const long long expect_tg =
        tg + it.anchor_cost + 2 * inner_batch * it.inner_length + it.nc_grad_cost;
    const long long expect_th = th + it.nc_hvp_cost;
    if (it.tg_after != expect_tg)
      return fail("gradient counter does not decompose at iteration " + std::to_string(it.k));
    if (it.th_after != expect_th)
      return fail("hvp counter does not decompose at iteration " + std::to_string(it.k));
    tg = it.tg_after;
    th = it.th_after;
    if (it.phase == Phase::ScsgEpoch) ++epochs;
    if (it.phase == Phase::Ncd3) ++steps;
    if (it.phase != Phase::ScsgEpoch) ++finder_calls;
  }
  if (tg != record.totals.grad_evals || th != record.totals.hvp_evals)
    return fail("totals do not match the final snapshot");
  if (epochs != record.epochs || steps != record.curvature_steps)
    return fail("phase counts do not match the log");
  if (finder_calls != record.nc_calls)
    return fail("curvature finder call count does not match the log");
  if (record.termination == Termination::BotReturned &&
      (record.iterations.empty() || record.iterations.back().phase != Phase::Terminate))
    return fail("bot termination without a terminate entry");
  return true;
}

template <typename Scalar>
struct Certificate {
  Vector<Scalar> point;
  Scalar f_value = 0;
  Scalar grad_norm = 0;
  Scalar min_eigenvalue = 0;
  Scalar grad_tol = 0;
  Scalar curvature_tol = 0;
  bool first_order = false;
  bool second_order = false;
  bool pass = false;
};

// Ground-truth certificate through the exact expectation oracle and the dense
// eigensolver.  Dimension is limited by the dense path; there is deliberately
// no approximate fallback.
template <typename Scalar>
Certificate<Scalar> certify_sosp(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                 const Targets<Scalar>& targets) {
  targets.validate();
  Certificate<Scalar> cert;
  cert.point = x;
  cert.f_value = p.value(x);
  cert.grad_norm = p.gradient(x).norm();
  cert.min_eigenvalue = dense_eigensolve(dense_hessian(p, x)).min_eigenvalue();
  cert.grad_tol = targets.grad_tol;
  cert.curvature_tol = targets.curvature_tol;
  cert.first_order = cert.grad_norm <= targets.grad_tol;
  cert.second_order = cert.min_eigenvalue >= -targets.curvature_tol;
  cert.pass = cert.first_order && cert.second_order;
  return cert;
}

}  // namespace flash
