#pragma once

#include <cmath>
#include <iostream>
#include <string_view>
#include <utility>

#include "flash/negcurve.hpp"
#include "flash/problem.hpp"
#include "flash/rng.hpp"

namespace flash {

// Exploiting a negative-curvature direction.  The third-order step moves a
// distance sqrt(3 curvature_tol / L3) along a found direction with a random
// sign; under third-order smoothness the sign-averaged decrease is at least
// 3 curvature_tol^2 / (8 L3) whenever the direction's Rayleigh quotient is at
// most -curvature_tol / 2.  The quadratic baseline moves curvature_tol / L2
// and tries both signs, paying an extra function evaluation for a decrease
// that is only of order curvature_tol^3 / L2^2.

enum class SignRule { Rademacher, Argmin };

inline SignRule parse_sign_rule(std::string_view s) {
  if (s == "rademacher") return SignRule::Rademacher;
  if (s == "argmin") return SignRule::Argmin;
  throw std::invalid_argument("unknown sign rule: " + std::string(s));
}

template <typename Scalar>
struct StepResult {
  bool moved = false;  // false: the finder certified bot and x is unchanged
  Vector<Scalar> y;
  Vector<Scalar> direction;
  int sign = 0;
  Scalar step_size = 0;
  Scalar rayleigh = 0;
  Scalar f_before = 0;
  Scalar f_after = 0;
  bool stayed_in_domain = true;

  static StepResult bot(Scalar f) {
    StepResult r;
    r.f_before = r.f_after = f;
    return r;
  }
};

template <typename Scalar>
Scalar third_order_step_size(const SmoothnessConstants<Scalar>& c, const Targets<Scalar>& t) {
  return std::sqrt(3 * t.curvature_tol / c.third_order_lipschitz);
}

template <typename Scalar>
Scalar expected_decrement_bound(const SmoothnessConstants<Scalar>& c, const Targets<Scalar>& t) {
  return 3 * t.curvature_tol * t.curvature_tol / (8 * c.third_order_lipschitz);
}

// Decrease guaranteed without conditioning on the curvature direction being
// genuine; valid only when the finder failure probability is at most
// curvature_tol / (3 curvature_tol + 8 L2).  A larger failure probability is
// reported on `warn` and the returned value is then only heuristic.
template <typename Scalar>
Scalar unconditional_decrement_bound(const SmoothnessConstants<Scalar>& c,
                                     const Targets<Scalar>& t,
                                     std::ostream* warn = &std::cerr) {
  const Scalar cap = t.curvature_tol / (3 * t.curvature_tol + 8 * c.hessian_lipschitz);
  if (t.failure_prob > cap && warn)
    *warn << "unconditional_decrement_bound: failure_prob " << double(t.failure_prob)
          << " exceeds " << double(cap) << "; the bound is not guaranteed\n";
  return t.curvature_tol * t.curvature_tol / (8 * c.third_order_lipschitz);
}

namespace detail {

template <typename Scalar>
StepResult<Scalar> take_step(const Problem<Scalar>& p, const Vector<Scalar>& x,
                             NcOutcome<Scalar> outcome, Scalar step, SignRule rule,
                             Rng& rng) {
  if (outcome.is_bot()) return StepResult<Scalar>::bot(p.value(x));

  StepResult<Scalar> r;
  r.moved = true;
  r.direction = std::move(outcome.direction);
  r.rayleigh = outcome.rayleigh;
  r.step_size = step;
  r.f_before = p.value(x);
  if (rule == SignRule::Rademacher) {
    r.sign = rng.rademacher();
    r.y = x + (Scalar(r.sign) * step) * r.direction;
    r.f_after = p.value(r.y);
  } else {
    const Vector<Scalar> plus = x + step * r.direction;
    const Vector<Scalar> minus = x - step * r.direction;
    const Scalar f_plus = p.value(plus);
    const Scalar f_minus = p.value(minus);
    r.sign = f_plus <= f_minus ? 1 : -1;
    r.y = r.sign > 0 ? plus : minus;
    r.f_after = r.sign > 0 ? f_plus : f_minus;
  }
  r.stayed_in_domain = p.domain().contains(r.y);
  return r;
}

}  // namespace detail

// Third-order negative-curvature step.  `finder` is called as
// finder(x, rng) -> NcOutcome and owns its oracle cost accounting.  The
// default sign rule is the random one; argmin is an opt-in.
template <typename Scalar, typename Finder>
StepResult<Scalar> ncd3_step(const Problem<Scalar>& p, const Vector<Scalar>& x,
                             const SmoothnessConstants<Scalar>& consts,
                             const Targets<Scalar>& targets, Finder&& finder, Rng& rng,
                             SignRule rule = SignRule::Rademacher) {
  consts.validate();
  targets.validate();
  return detail::take_step(p, x, finder(x, rng), third_order_step_size(consts, targets),
                           rule, rng);
}

// Second-order baseline step; always evaluates both signs and keeps the
// better one.
template <typename Scalar, typename Finder>
StepResult<Scalar> ncd2_baseline_step(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                      const SmoothnessConstants<Scalar>& consts,
                                      const Targets<Scalar>& targets, Finder&& finder,
                                      Rng& rng) {
  consts.validate();
  targets.validate();
  const Scalar step = targets.curvature_tol / consts.hessian_lipschitz;
  return detail::take_step(p, x, finder(x, rng), step, SignRule::Argmin, rng);
}

}  // namespace flash
