#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "flash/rng.hpp"
#include "flash/types.hpp"

namespace flash {

// A stochastic objective f(x) = E_xi[F(x; xi)].  Components are addressed by
// an opaque 64-bit id drawn via sample_component, so finite sums (id = index)
// and streaming objectives (id = seed of the draw) share one interface.
//
// value / gradient / hessian_vector are the exact expectation oracle.  For
// built-in problems these are closed forms; optimizers must not use them for
// anything but certification and reporting, which is why they bypass the
// EvalCounters mechanism entirely.
template <typename Scalar>
class Problem {
 public:
  virtual ~Problem() = default;

  virtual Index dimension() const = 0;
  virtual Domain<Scalar> domain() const { return Domain<Scalar>::unbounded(); }
  virtual const SmoothnessConstants<Scalar>& constants() const = 0;

  virtual Scalar value(const Vector<Scalar>& x) const = 0;
  virtual Vector<Scalar> gradient(const Vector<Scalar>& x) const = 0;
  virtual Vector<Scalar> hessian_vector(const Vector<Scalar>& x,
                                        const Vector<Scalar>& v) const = 0;

  // d^3/dt^3 f(x + t h) at t = 0.  Only the built-in problems implement it;
  // it backs the Taylor remainder checks in the test suite.
  virtual Scalar third_directional(const Vector<Scalar>&, const Vector<Scalar>&) const {
    throw std::logic_error("third_directional: not available for this problem");
  }

  virtual std::uint64_t sample_component(Rng& rng) const = 0;
  virtual Scalar component_value(std::uint64_t id, const Vector<Scalar>& x) const = 0;
  virtual Vector<Scalar> component_gradient(std::uint64_t id,
                                            const Vector<Scalar>& x) const = 0;

  virtual bool has_component_hvp() const { return false; }
  virtual Vector<Scalar> component_hvp(std::uint64_t, const Vector<Scalar>&,
                                       const Vector<Scalar>&) const {
    throw std::logic_error("component_hvp: not available for this problem");
  }
};

// Finite sum f(x) = (1/n) sum_i f_i(x); component ids are indices in [0, n).
template <typename Scalar>
class FiniteSumProblem : public Problem<Scalar> {
 public:
  virtual Index num_components() const = 0;

  std::uint64_t sample_component(Rng& rng) const final {
    return rng.below(static_cast<std::uint64_t>(num_components()));
  }
};

namespace detail {
inline void bump(EvalCounters* c, long long grads, long long hvps) {
  if (c) {
    c->grad_evals += grads;
    c->hvp_evals += hvps;
  }
}
}  // namespace detail

// Mean gradient over an explicit batch of component ids.  grad_evals +=
// ids.size().  Summation order follows the batch order, so equal batches give
// bit-identical results.
template <typename Scalar>
Vector<Scalar> batch_gradient(const Problem<Scalar>& p, const Vector<Scalar>& x,
                              const std::vector<std::uint64_t>& ids,
                              EvalCounters* counters = nullptr) {
  if (ids.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  Vector<Scalar> g = Vector<Scalar>::Zero(p.dimension());
  for (std::uint64_t id : ids) g += p.component_gradient(id, x);
  detail::bump(counters, static_cast<long long>(ids.size()), 0);
  return g / static_cast<Scalar>(ids.size());
}

// Deterministic full pass over a finite sum.  grad_evals += n.
template <typename Scalar>
Vector<Scalar> full_gradient(const FiniteSumProblem<Scalar>& p, const Vector<Scalar>& x,
                             EvalCounters* counters = nullptr) {
  const Index n = p.num_components();
  Vector<Scalar> g = Vector<Scalar>::Zero(p.dimension());
  for (Index i = 0; i < n; ++i)
    g += p.component_gradient(static_cast<std::uint64_t>(i), x);
  detail::bump(counters, static_cast<long long>(n), 0);
  return g / static_cast<Scalar>(n);
}

// Mean of `batch` sampled component gradients.  grad_evals += batch.  On a
// finite sum with batch == n the sampling is skipped and the deterministic
// full pass is returned, so the two oracles agree exactly in that case.
template <typename Scalar>
Vector<Scalar> subsampled_gradient(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                   Index batch, Rng& rng,
                                   EvalCounters* counters = nullptr) {
  if (batch <= 0) throw std::invalid_argument("subsampled_gradient: batch must be positive");
  if (const auto* fs = dynamic_cast<const FiniteSumProblem<Scalar>*>(&p)) {
    if (batch == fs->num_components()) return full_gradient(*fs, x, counters);
    if (batch > fs->num_components())
      throw std::invalid_argument("subsampled_gradient: batch exceeds component count");
  }
  std::vector<std::uint64_t> ids(static_cast<std::size_t>(batch));
  for (auto& id : ids) id = p.sample_component(rng);
  return batch_gradient(p, x, ids, counters);
}

// Step used by the gradient-difference fallbacks below.
template <typename Scalar>
Scalar hvp_fd_radius(const Vector<Scalar>& x, const Vector<Scalar>& v) {
  const Scalar base = std::max(Scalar(1e-5), Scalar(1e-5) * x.norm());
  return base / std::max(Scalar(1), v.norm());
}

// Hessian-vector product of the mean objective.  hvp_evals += 1.  Falls back
// to a forward difference of mean gradients when no analytic form exists,
// which additionally costs 2 gradient units.
template <typename Scalar>
Vector<Scalar> hvp(const Problem<Scalar>& p, const Vector<Scalar>& x,
                   const Vector<Scalar>& v, EvalCounters* counters = nullptr) {
  detail::bump(counters, 0, 1);
  if (p.has_component_hvp()) return p.hessian_vector(x, v);
  const Scalar r = hvp_fd_radius(x, v);
  detail::bump(counters, 2, 0);
  return (p.gradient(x + r * v) - p.gradient(x)) / r;
}

// Gradient-difference estimate of the same product, for methods restricted to
// gradient access.  Costs 2 gradient units and no hvp units.
template <typename Scalar>
Vector<Scalar> hvp_by_gradient_diff(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                    const Vector<Scalar>& v,
                                    EvalCounters* counters = nullptr) {
  const Scalar r = hvp_fd_radius(x, v);
  detail::bump(counters, 2, 0);
  return (p.gradient(x + r * v) - p.gradient(x)) / r;
}

// Component-level versions, used by the sampled curvature search.
template <typename Scalar>
Vector<Scalar> component_hvp(const Problem<Scalar>& p, std::uint64_t id,
                             const Vector<Scalar>& x, const Vector<Scalar>& v,
                             EvalCounters* counters = nullptr) {
  detail::bump(counters, 0, 1);
  if (p.has_component_hvp()) return p.component_hvp(id, x, v);
  const Scalar r = hvp_fd_radius(x, v);
  detail::bump(counters, 2, 0);
  return (p.component_gradient(id, x + r * v) - p.component_gradient(id, x)) / r;
}

template <typename Scalar>
Vector<Scalar> component_hvp_by_gradient_diff(const Problem<Scalar>& p, std::uint64_t id,
                                              const Vector<Scalar>& x,
                                              const Vector<Scalar>& v,
                                              EvalCounters* counters = nullptr) {
  const Scalar r = hvp_fd_radius(x, v);
  detail::bump(counters, 2, 0);
  return (p.component_gradient(id, x + r * v) - p.component_gradient(id, x)) / r;
}

}  // namespace flash
