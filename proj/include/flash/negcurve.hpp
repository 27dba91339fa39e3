#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "flash/problem.hpp"
#include "flash/rng.hpp"
#include "flash/types.hpp"

namespace flash {

// Negative-curvature search.  Given x, either certifies (up to the failure
// probability) that the Hessian has no eigenvalue below -curvature_tol
// ("bot"), or returns a unit direction whose Rayleigh quotient is at most
// -curvature_tol / 2.
//
// All methods run shifted power-style iterations on M = L1 I - H, whose top
// eigenvector is the most negative Hessian direction and whose spectrum is
// nonnegative, so iterates never oscillate in sign:
//   hvp-power:     Hessian-vector products of the mean objective
//   gradient-only: H w estimated by a two-point gradient difference
//   oja:           streaming iterations from sampled component Hessians
//                  (or component gradient differences under gradient-only)

enum class NcMethod { HvpPower, GradientOnly, Oja };

inline NcMethod parse_nc_method(std::string_view s) {
  if (s == "hvp-power") return NcMethod::HvpPower;
  if (s == "gradient-only") return NcMethod::GradientOnly;
  if (s == "oja") return NcMethod::Oja;
  throw std::invalid_argument("unknown negative-curvature method: " + std::string(s));
}

inline const char* nc_method_name(NcMethod m) {
  switch (m) {
    case NcMethod::HvpPower: return "hvp-power";
    case NcMethod::GradientOnly: return "gradient-only";
    case NcMethod::Oja: return "oja";
  }
  return "?";
}

struct NcConfig {
  NcMethod method = NcMethod::HvpPower;
  Index max_iters = 0;  // 0: use the budget formulas below
  int retries = 2;      // budget doublings before giving up
  Index minibatch = 1;  // samples averaged per streaming iteration
};

template <typename Scalar>
struct NcOutcome {
  bool has_direction = false;
  Vector<Scalar> direction;
  Scalar rayleigh = 0;

  bool is_bot() const { return !has_direction; }

  static NcOutcome bot() { return {}; }
  static NcOutcome found(Vector<Scalar> v, Scalar rho) {
    NcOutcome o;
    o.has_direction = true;
    o.direction = std::move(v);
    o.rayleigh = rho;
    return o;
  }
};

// Raised when repeated runs keep landing in the undecidable band
// (-3/4 curvature_tol, -1/2 curvature_tol).  Callers must treat this as an
// error; it is never silently mapped to bot.
class InconclusiveError : public std::runtime_error {
 public:
  explicit InconclusiveError(const std::string& what) : std::runtime_error(what) {}
};

// Iteration budget for the deterministic power methods.
template <typename Scalar>
Index power_iteration_budget(Scalar grad_lipschitz, Scalar curvature_tol, Index d,
                             Scalar failure_prob) {
  const double raw = 8.0 * std::sqrt(double(grad_lipschitz) / double(curvature_tol)) *
                     std::log(double(d) / double(failure_prob));
  return std::max<Index>(1, static_cast<Index>(std::ceil(raw)));
}

// Sample budget for the streaming method, capped at 1e6.
template <typename Scalar>
Index oja_sample_budget(Scalar grad_lipschitz, Scalar curvature_tol, Index d,
                        Scalar failure_prob) {
  const double ratio = double(grad_lipschitz) / double(curvature_tol);
  const double lg = std::log(double(d) / double(failure_prob));
  const double raw = 8.0 * ratio * ratio * lg * lg;
  return std::max<Index>(1, static_cast<Index>(std::ceil(std::min(raw, 1e6))));
}

// v' grad^2 f(x) v through one costed Hessian-vector product.  Requires v to
// be unit within 1e-8.
template <typename Scalar>
Scalar rayleigh_quotient(const Problem<Scalar>& p, const Vector<Scalar>& x,
                         const Vector<Scalar>& v, EvalCounters* counters = nullptr) {
  if (std::abs(v.norm() - Scalar(1)) > Scalar(1e-8))
    throw std::invalid_argument("rayleigh_quotient: v must be a unit vector");
  return v.dot(hvp(p, x, v, counters));
}

namespace detail {

template <typename Scalar>
NcOutcome<Scalar> decide_or_retry(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                  Vector<Scalar> w, Scalar curvature_tol,
                                  EvalCounters* counters, bool& keep_trying,
                                  Scalar& last_rho) {
  const Scalar rho = rayleigh_quotient(p, x, w, counters);
  last_rho = rho;
  if (rho <= -Scalar(0.75) * curvature_tol) {
    if (!(rho <= -curvature_tol / 2 + Scalar(1e-8)))
      throw std::logic_error("negative-curvature direction failed the soundness check");
    keep_trying = false;
    return NcOutcome<Scalar>::found(std::move(w), rho);
  }
  if (rho >= -curvature_tol / 2) {
    keep_trying = false;
    return NcOutcome<Scalar>::bot();
  }
  keep_trying = true;
  return NcOutcome<Scalar>::bot();
}

template <typename Scalar>
void renormalize(Vector<Scalar>& w, Rng& rng) {
  const Scalar norm = w.norm();
  if (norm > Scalar(1e-12))
    w /= norm;
  else
    w = rng.template unit_vector<Scalar>(w.size());
}

[[noreturn]] inline void throw_inconclusive(NcMethod method, int attempts, double rho) {
  std::ostringstream msg;
  msg << "negative-curvature search inconclusive after " << attempts << " attempts (method "
      << nc_method_name(method) << ", final rayleigh " << rho << ")";
  throw InconclusiveError(msg.str());
}

}  // namespace detail

// Deterministic-oracle search (full Hessian information per iteration).
// Usable whenever mean-oracle products are an admissible operation; the
// finite-sum driver uses it.
template <typename Scalar>
NcOutcome<Scalar> approx_nc_full(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                 const SmoothnessConstants<Scalar>& consts,
                                 const Targets<Scalar>& targets, const NcConfig& config,
                                 Rng& rng, EvalCounters* counters = nullptr) {
  targets.validate();
  consts.validate();
  if (config.method == NcMethod::Oja)
    throw std::invalid_argument("approx_nc_full: oja is a streaming method; use approx_nc_streaming");
  const Index d = p.dimension();
  const Scalar shift = consts.grad_lipschitz;
  const Index base_budget =
      config.max_iters > 0
          ? config.max_iters
          : power_iteration_budget(consts.grad_lipschitz, targets.curvature_tol, d,
                                   targets.failure_prob);

  Scalar last_rho = 0;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    const Index budget = base_budget << attempt;
    Vector<Scalar> w = rng.template unit_vector<Scalar>(d);
    for (Index t = 0; t < budget; ++t) {
      Vector<Scalar> hw = config.method == NcMethod::HvpPower
                              ? hvp(p, x, w, counters)
                              : hvp_by_gradient_diff(p, x, w, counters);
      w = shift * w - hw;
      detail::renormalize(w, rng);
    }
    bool keep_trying = false;
    NcOutcome<Scalar> outcome = detail::decide_or_retry(p, x, std::move(w),
                                                        targets.curvature_tol, counters,
                                                        keep_trying, last_rho);
    if (!keep_trying) return outcome;
  }
  detail::throw_inconclusive(config.method, config.retries + 1, double(last_rho));
}

// Streaming search from sampled component curvature.  Each iteration averages
// `minibatch` fresh component estimates; the budget counts samples.
template <typename Scalar>
NcOutcome<Scalar> approx_nc_streaming(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                      const SmoothnessConstants<Scalar>& consts,
                                      const Targets<Scalar>& targets, const NcConfig& config,
                                      Rng& rng, EvalCounters* counters = nullptr) {
  targets.validate();
  consts.validate();
  if (config.method == NcMethod::HvpPower)
    throw std::invalid_argument(
        "approx_nc_streaming: hvp-power needs the mean oracle; use approx_nc_full");
  const Index d = p.dimension();
  const Scalar shift = consts.grad_lipschitz;
  const Index m = std::max<Index>(1, config.minibatch);
  const Index base_budget =
      config.max_iters > 0
          ? config.max_iters
          : oja_sample_budget(consts.grad_lipschitz, targets.curvature_tol, d,
                              targets.failure_prob);
  const Scalar step = 1 / (2 * consts.grad_lipschitz);

  Scalar last_rho = 0;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    const Index budget = base_budget << attempt;
    Vector<Scalar> w = rng.template unit_vector<Scalar>(d);
    for (Index used = 0; used < budget; used += m) {
      Vector<Scalar> hw = Vector<Scalar>::Zero(d);
      for (Index j = 0; j < m; ++j) {
        const std::uint64_t id = p.sample_component(rng);
        hw += config.method == NcMethod::Oja
                  ? component_hvp(p, id, x, w, counters)
                  : component_hvp_by_gradient_diff(p, id, x, w, counters);
      }
      hw /= static_cast<Scalar>(m);
      w += step * (shift * w - hw);
      detail::renormalize(w, rng);
    }
    bool keep_trying = false;
    NcOutcome<Scalar> outcome = detail::decide_or_retry(p, x, std::move(w),
                                                        targets.curvature_tol, counters,
                                                        keep_trying, last_rho);
    if (!keep_trying) return outcome;
  }
  detail::throw_inconclusive(config.method, config.retries + 1, double(last_rho));
}

}  // namespace flash
