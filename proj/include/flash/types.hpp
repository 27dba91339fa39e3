#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace flash {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

// Oracle cost counters.  grad_evals is the number of stochastic component
// gradient evaluations, hvp_evals the number of component Hessian-vector
// products.  A full pass over an n-component finite sum costs n gradient
// units.  Function value evaluations are free.
struct EvalCounters {
  long long grad_evals = 0;
  long long hvp_evals = 0;

  EvalCounters& operator+=(const EvalCounters& o) {
    grad_evals += o.grad_evals;
    hvp_evals += o.hvp_evals;
    return *this;
  }
  friend EvalCounters operator-(EvalCounters a, const EvalCounters& b) {
    a.grad_evals -= b.grad_evals;
    a.hvp_evals -= b.hvp_evals;
    return a;
  }
  friend bool operator==(const EvalCounters& a, const EvalCounters& b) {
    return a.grad_evals == b.grad_evals && a.hvp_evals == b.hvp_evals;
  }
};

// Smoothness and noise description of an objective.  grad_lipschitz,
// hessian_lipschitz and third_order_lipschitz bound the operator norms of the
// second, third and fourth derivative differences respectively (the usual
// L1, L2, L3 chain).  noise_sigma is the sub-Gaussian parameter of the
// component gradient noise (0 for deterministic access), optimal_gap an upper
// bound on f(x0) - inf f for any admissible start, and variance_bound a bound
// on E ||component grad - full grad||^2 (at most 2 sigma^2).
template <typename Scalar>
struct SmoothnessConstants {
  Scalar grad_lipschitz = 1;
  Scalar hessian_lipschitz = 1;
  Scalar third_order_lipschitz = 1;
  Scalar noise_sigma = 0;
  Scalar optimal_gap = 1;
  Scalar variance_bound = 0;

  void validate() const {
    if (!(grad_lipschitz > 0) || !(hessian_lipschitz > 0) ||
        !(third_order_lipschitz > 0))
      throw std::invalid_argument(
          "SmoothnessConstants: Lipschitz constants must be positive");
    if (!(noise_sigma >= 0))
      throw std::invalid_argument("SmoothnessConstants: noise_sigma must be >= 0");
    if (!(optimal_gap > 0))
      throw std::invalid_argument("SmoothnessConstants: optimal_gap must be positive");
    if (!(variance_bound >= 0) ||
        variance_bound > 2 * noise_sigma * noise_sigma + Scalar(1e-12))
      throw std::invalid_argument(
          "SmoothnessConstants: variance_bound must lie in [0, 2 sigma^2]");
  }
};

// Accuracy targets for a stationary point search: gradient norm at most
// grad_tol and smallest Hessian eigenvalue at least -curvature_tol, with
// overall failure probability failure_prob.  concentration_prob is the
// per-batch failure probability used when sizing subsampled anchor gradients.
template <typename Scalar>
struct Targets {
  Scalar grad_tol = Scalar(1e-2);
  Scalar curvature_tol = Scalar(1e-1);
  Scalar failure_prob = Scalar(0.05);
  Scalar concentration_prob = Scalar(0.01);

  void validate() const {
    if (!(grad_tol > 0) || !(curvature_tol > 0) || !(curvature_tol < 1))
      throw std::invalid_argument("Targets: need grad_tol > 0 and curvature_tol in (0, 1)");
    if (!(failure_prob > 0) || !(failure_prob < 1) || !(concentration_prob > 0) ||
        !(concentration_prob < 1))
      throw std::invalid_argument("Targets: probabilities must lie in (0, 1)");
  }
};

// The curvature-step analysis needs the negative-curvature finder failure
// probability below curvature_tol / (3 curvature_tol + 8 hessian_lipschitz);
// this default satisfies it whenever possible while staying at most 5%.
template <typename Scalar>
Scalar default_failure_prob(const SmoothnessConstants<Scalar>& c, Scalar curvature_tol) {
  const Scalar cap = curvature_tol / (3 * curvature_tol + 8 * c.hessian_lipschitz);
  return std::min(Scalar(0.05), cap);
}

// Region on which a problem's smoothness constants are certified.
template <typename Scalar>
struct Domain {
  enum class Kind { Unbounded, MaxNormBall, EuclideanBall };

  Kind kind = Kind::Unbounded;
  Scalar radius = 0;

  static Domain unbounded() { return {}; }
  static Domain max_norm_ball(Scalar r) { return {Kind::MaxNormBall, r}; }
  static Domain euclidean_ball(Scalar r) { return {Kind::EuclideanBall, r}; }

  bool contains(const Vector<Scalar>& x) const {
    switch (kind) {
      case Kind::Unbounded: return true;
      case Kind::MaxNormBall: return x.template lpNorm<Eigen::Infinity>() <= radius;
      case Kind::EuclideanBall: return x.norm() <= radius;
    }
    return true;
  }

  // Projects x onto the domain in place; returns true when x moved.
  bool project(Vector<Scalar>& x) const {
    switch (kind) {
      case Kind::Unbounded:
        return false;
      case Kind::MaxNormBall: {
        bool moved = false;
        for (Index i = 0; i < x.size(); ++i) {
          if (x[i] > radius) { x[i] = radius; moved = true; }
          else if (x[i] < -radius) { x[i] = -radius; moved = true; }
        }
        return moved;
      }
      case Kind::EuclideanBall: {
        const Scalar norm = x.norm();
        if (norm <= radius) return false;
        x *= radius / norm;
        return true;
      }
    }
    return false;
  }
};

}  // namespace flash
