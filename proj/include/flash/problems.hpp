#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "flash/problem.hpp"

namespace flash {

// Deterministic smooth part of a built-in problem.  The noise wrappers below
// turn a core into a finite-sum or streaming stochastic objective.
template <typename Scalar>
class SmoothCore {
 public:
  virtual ~SmoothCore() = default;
  virtual Index dimension() const = 0;
  virtual Domain<Scalar> domain() const = 0;
  // noise_sigma / variance_bound are filled in by the wrapper.
  virtual SmoothnessConstants<Scalar> base_constants() const = 0;
  virtual Scalar value(const Vector<Scalar>& x) const = 0;
  virtual Vector<Scalar> gradient(const Vector<Scalar>& x) const = 0;
  virtual Vector<Scalar> hvp(const Vector<Scalar>& x, const Vector<Scalar>& v) const = 0;
  virtual Scalar third_directional(const Vector<Scalar>& x, const Vector<Scalar>& h) const = 0;
};

// f(x) = sum_j (x_j^4/4 - x_j^2/2).  Strict saddle at the origin with
// Hessian -I; minimizers at every sign pattern of (+-1, ..., +-1) with value
// -d/4.  On the box |x_j| <= 2: |f''| = |3 x_j^2 - 1| <= 11, |f'''| = |6 x_j|
// <= 12, f'''' = 6, giving the certified constants below.
template <typename Scalar>
class QuarticCore final : public SmoothCore<Scalar> {
 public:
  explicit QuarticCore(Index d) : d_(d) {
    if (d <= 0) throw std::invalid_argument("QuarticCore: dimension must be positive");
  }

  Index dimension() const override { return d_; }
  Domain<Scalar> domain() const override { return Domain<Scalar>::max_norm_ball(2); }

  SmoothnessConstants<Scalar> base_constants() const override {
    SmoothnessConstants<Scalar> c;
    c.grad_lipschitz = 11;
    c.hessian_lipschitz = 12;
    c.third_order_lipschitz = 6;
    // Coordinate range on the box: max x^4/4 - x^2/2 = 2 at |x| = 2,
    // min = -1/4 at |x| = 1.
    c.optimal_gap = Scalar(2.25) * static_cast<Scalar>(d_);
    return c;
  }

  Scalar value(const Vector<Scalar>& x) const override {
    return (x.array().square().square() / 4 - x.array().square() / 2).sum();
  }
  Vector<Scalar> gradient(const Vector<Scalar>& x) const override {
    return x.array().cube() - x.array();
  }
  Vector<Scalar> hvp(const Vector<Scalar>& x, const Vector<Scalar>& v) const override {
    return (3 * x.array().square() - 1) * v.array();
  }
  Scalar third_directional(const Vector<Scalar>& x, const Vector<Scalar>& h) const override {
    return 6 * (x.array() * h.array().cube()).sum();
  }

 private:
  Index d_;
};

// f(x) = (1/2) x' A x + (kappa/4) ||x||^4 with A = Q diag(spectrum) Q',
// Q = I - 2 u u' a Householder reflection from a seeded unit u.  The planted
// spectrum is exact, products with A cost O(d), and the quartic confinement
// term makes the objective coercive.  On the ball ||x|| <= R:
//   ||grad^2 f|| <= max|spectrum| + 3 kappa R^2
//   third derivative norm <= 6 kappa R      (the A part is constant)
//   fourth derivative norm = 6 kappa        (exact, x independent)
// and inf f = -lambda_min^2 / (4 kappa) when lambda_min < 0.
template <typename Scalar>
class CoupledCore final : public SmoothCore<Scalar> {
 public:
  CoupledCore(Vector<Scalar> spectrum, Scalar kappa, Scalar radius, std::uint64_t seed)
      : spectrum_(std::move(spectrum)), kappa_(kappa), radius_(radius) {
    if (spectrum_.size() <= 0)
      throw std::invalid_argument("CoupledCore: empty spectrum");
    if (!(kappa_ > 0) || !(radius_ > 0))
      throw std::invalid_argument("CoupledCore: kappa and radius must be positive");
    Rng rng(seed);
    u_ = rng.template unit_vector<Scalar>(spectrum_.size());
  }

  // Planted lambda_min = -1, remaining eigenvalues spread over [0.5, 2].
  static CoupledCore saddle(Index d, std::uint64_t seed) {
    Vector<Scalar> s(d);
    s[0] = -1;
    for (Index i = 1; i < d; ++i)
      s[i] = Scalar(0.5) + Scalar(1.5) * static_cast<Scalar>(i - 1) /
                               static_cast<Scalar>(std::max<Index>(1, d - 2));
    return CoupledCore(std::move(s), Scalar(0.25), Scalar(2), seed);
  }

  // Two planted negative eigenvalues (-1 and -0.5) with a spectral gap, the
  // rest spread over [0.6, 2.4].  Weaker confinement than the saddle family.
  static CoupledCore rayleigh(Index d, std::uint64_t seed) {
    Vector<Scalar> s(d);
    s[0] = -1;
    if (d > 1) s[1] = Scalar(-0.5);
    for (Index i = 2; i < d; ++i)
      s[i] = Scalar(0.6) + Scalar(1.8) * static_cast<Scalar>(i - 2) /
                               static_cast<Scalar>(std::max<Index>(1, d - 3));
    return CoupledCore(std::move(s), Scalar(0.1), Scalar(2), seed);
  }

  Index dimension() const override { return spectrum_.size(); }
  Domain<Scalar> domain() const override { return Domain<Scalar>::euclidean_ball(radius_); }

  SmoothnessConstants<Scalar> base_constants() const override {
    const Scalar max_abs = spectrum_.cwiseAbs().maxCoeff();
    const Scalar max_pos = std::max<Scalar>(spectrum_.maxCoeff(), 0);
    const Scalar min_eig = spectrum_.minCoeff();
    SmoothnessConstants<Scalar> c;
    c.grad_lipschitz = max_abs + 3 * kappa_ * radius_ * radius_;
    c.hessian_lipschitz = 6 * kappa_ * radius_;
    c.third_order_lipschitz = 6 * kappa_;
    Scalar upper = Scalar(0.5) * max_pos * radius_ * radius_ +
                   kappa_ / 4 * radius_ * radius_ * radius_ * radius_;
    Scalar lower = min_eig < 0 ? -min_eig * min_eig / (4 * kappa_) : Scalar(0);
    c.optimal_gap = upper - lower;
    return c;
  }

  Vector<Scalar> apply_a(const Vector<Scalar>& v) const {
    Vector<Scalar> w = v - 2 * u_ * u_.dot(v);
    w.array() *= spectrum_.array();
    return w - 2 * u_ * u_.dot(w);
  }

  Scalar value(const Vector<Scalar>& x) const override {
    const Scalar n2 = x.squaredNorm();
    return Scalar(0.5) * x.dot(apply_a(x)) + kappa_ / 4 * n2 * n2;
  }
  Vector<Scalar> gradient(const Vector<Scalar>& x) const override {
    return apply_a(x) + kappa_ * x.squaredNorm() * x;
  }
  Vector<Scalar> hvp(const Vector<Scalar>& x, const Vector<Scalar>& v) const override {
    return apply_a(v) + kappa_ * (x.squaredNorm() * v + 2 * x.dot(v) * x);
  }
  Scalar third_directional(const Vector<Scalar>& x, const Vector<Scalar>& h) const override {
    return 6 * kappa_ * x.dot(h) * h.squaredNorm();
  }

  const Vector<Scalar>& spectrum() const { return spectrum_; }

 private:
  Vector<Scalar> spectrum_;
  Scalar kappa_;
  Scalar radius_;
  Vector<Scalar> u_;
};

// f(x) = (1/2) x' H x for a fixed symmetric H.  Used by tests that need a
// constant Hessian with a known spectrum.  Any positive hessian_lipschitz /
// third_order_lipschitz are valid bounds here (both derivatives vanish); the
// defaults keep derived step sizes finite.
template <typename Scalar>
class QuadraticCore final : public SmoothCore<Scalar> {
 public:
  explicit QuadraticCore(Matrix<Scalar> h, Scalar hessian_lipschitz = 1,
                         Scalar third_order_lipschitz = 1)
      : h_(std::move(h)) {
    if (h_.rows() != h_.cols() || h_.rows() == 0)
      throw std::invalid_argument("QuadraticCore: H must be square and non-empty");
    if ((h_ - h_.transpose()).template lpNorm<Eigen::Infinity>() >
        Scalar(1e-12) * std::max<Scalar>(1, h_.template lpNorm<Eigen::Infinity>()))
      throw std::invalid_argument("QuadraticCore: H must be symmetric");
    constants_.grad_lipschitz = std::max<Scalar>(h_.norm(), Scalar(1e-12));
    constants_.hessian_lipschitz = hessian_lipschitz;
    constants_.third_order_lipschitz = third_order_lipschitz;
    constants_.optimal_gap = std::max<Scalar>(h_.norm(), 1);
  }

  Index dimension() const override { return h_.rows(); }
  Domain<Scalar> domain() const override { return Domain<Scalar>::unbounded(); }
  SmoothnessConstants<Scalar> base_constants() const override { return constants_; }

  Scalar value(const Vector<Scalar>& x) const override {
    return Scalar(0.5) * x.dot(h_ * x);
  }
  Vector<Scalar> gradient(const Vector<Scalar>& x) const override { return h_ * x; }
  Vector<Scalar> hvp(const Vector<Scalar>&, const Vector<Scalar>& v) const override {
    return h_ * v;
  }
  Scalar third_directional(const Vector<Scalar>&, const Vector<Scalar>&) const override {
    return 0;
  }

 private:
  Matrix<Scalar> h_;
  SmoothnessConstants<Scalar> constants_;
};

namespace detail {

// Symmetric uniform on (-1, 1): values +-(k + 1/2) 2^-52 pair up exactly, so
// the mean is zero in exact arithmetic (no half-open-interval bias).
inline double symmetric_uniform(Rng& rng) {
  const double u = static_cast<double>(rng.next_u64() >> 11) + 0.5;
  return u * 0x1.0p-52 - 1.0;
}

}  // namespace detail

// Finite sum around a core: f_i(x) = core(x) + <b_i, x> with the b_i drawn
// uniformly, mean-centered so they sum to zero, and rescaled so that
// max_i ||b_i|| <= sigma.  Component Hessians equal the core Hessian.
template <typename Scalar>
class FiniteSumLinearNoise final : public FiniteSumProblem<Scalar> {
 public:
  FiniteSumLinearNoise(std::shared_ptr<const SmoothCore<Scalar>> core, Index n,
                       Scalar sigma, std::uint64_t seed)
      : core_(std::move(core)) {
    if (n <= 0) throw std::invalid_argument("FiniteSumLinearNoise: n must be positive");
    if (!(sigma >= 0)) throw std::invalid_argument("FiniteSumLinearNoise: sigma must be >= 0");
    const Index d = core_->dimension();
    offsets_.resize(d, n);
    Rng rng(seed);
    const Scalar scale = sigma / std::sqrt(static_cast<Scalar>(d));
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < d; ++i)
        offsets_(i, j) = scale * static_cast<Scalar>(detail::symmetric_uniform(rng));
    const Vector<Scalar> mean = offsets_.rowwise().mean();
    offsets_.colwise() -= mean;
    Scalar max_norm = 0;
    for (Index j = 0; j < n; ++j) max_norm = std::max(max_norm, offsets_.col(j).norm());
    if (max_norm > sigma && max_norm > 0) offsets_ *= sigma / max_norm;

    constants_ = core_->base_constants();
    constants_.noise_sigma = sigma;
    constants_.variance_bound = 2 * sigma * sigma;
    constants_.validate();
  }

  Index dimension() const override { return core_->dimension(); }
  Index num_components() const override { return offsets_.cols(); }
  Domain<Scalar> domain() const override { return core_->domain(); }
  const SmoothnessConstants<Scalar>& constants() const override { return constants_; }

  Scalar value(const Vector<Scalar>& x) const override { return core_->value(x); }
  Vector<Scalar> gradient(const Vector<Scalar>& x) const override {
    return core_->gradient(x);
  }
  Vector<Scalar> hessian_vector(const Vector<Scalar>& x, const Vector<Scalar>& v) const override {
    return core_->hvp(x, v);
  }
  Scalar third_directional(const Vector<Scalar>& x, const Vector<Scalar>& h) const override {
    return core_->third_directional(x, h);
  }

  Scalar component_value(std::uint64_t id, const Vector<Scalar>& x) const override {
    return core_->value(x) + offsets_.col(check_id(id)).dot(x);
  }
  Vector<Scalar> component_gradient(std::uint64_t id, const Vector<Scalar>& x) const override {
    return core_->gradient(x) + offsets_.col(check_id(id));
  }
  bool has_component_hvp() const override { return true; }
  Vector<Scalar> component_hvp(std::uint64_t id, const Vector<Scalar>& x,
                               const Vector<Scalar>& v) const override {
    check_id(id);
    return core_->hvp(x, v);
  }

 private:
  Index check_id(std::uint64_t id) const {
    if (id >= static_cast<std::uint64_t>(offsets_.cols()))
      throw std::out_of_range("FiniteSumLinearNoise: component id out of range");
    return static_cast<Index>(id);
  }

  std::shared_ptr<const SmoothCore<Scalar>> core_;
  Matrix<Scalar> offsets_;
  SmoothnessConstants<Scalar> constants_;
};

// Streaming objective around a core.  A component id is a fresh 64-bit draw;
// the component perturbation is reconstructed from (problem seed, id), so the
// oracle is deterministic given the id.  Perturbations:
//   linear:   <b(id), x>            entries symmetric uniform, ||b|| < sigma
//   Hessian:  (s(id)/2) x_j(id)^2   optional, |s| <= hessian_noise
// Both have mean zero, so the expectation oracle is the core itself.
template <typename Scalar>
class StreamingLinearNoise final : public Problem<Scalar> {
 public:
  StreamingLinearNoise(std::shared_ptr<const SmoothCore<Scalar>> core, Scalar sigma,
                       std::uint64_t seed, Scalar hessian_noise = 0)
      : core_(std::move(core)), sigma_(sigma), hessian_noise_(hessian_noise), seed_(seed) {
    if (!(sigma >= 0) || !(hessian_noise >= 0))
      throw std::invalid_argument("StreamingLinearNoise: noise levels must be >= 0");
    constants_ = core_->base_constants();
    // The curvature perturbation adds at most hessian_noise to the component
    // gradient Lipschitz constant, and at most radius * hessian_noise to the
    // gradient noise magnitude (|x_j| is bounded by the domain radius).
    const Scalar r = domain_radius();
    constants_.grad_lipschitz += hessian_noise_;
    constants_.noise_sigma = sigma_ + r * hessian_noise_;
    constants_.variance_bound = 2 * constants_.noise_sigma * constants_.noise_sigma;
    constants_.validate();
  }

  Index dimension() const override { return core_->dimension(); }
  Domain<Scalar> domain() const override { return core_->domain(); }
  const SmoothnessConstants<Scalar>& constants() const override { return constants_; }

  Scalar value(const Vector<Scalar>& x) const override { return core_->value(x); }
  Vector<Scalar> gradient(const Vector<Scalar>& x) const override {
    return core_->gradient(x);
  }
  Vector<Scalar> hessian_vector(const Vector<Scalar>& x, const Vector<Scalar>& v) const override {
    return core_->hvp(x, v);
  }
  Scalar third_directional(const Vector<Scalar>& x, const Vector<Scalar>& h) const override {
    return core_->third_directional(x, h);
  }

  std::uint64_t sample_component(Rng& rng) const override { return rng.next_u64(); }

  Scalar component_value(std::uint64_t id, const Vector<Scalar>& x) const override {
    const Draw d = reconstruct(id);
    Scalar v = core_->value(x) + d.offset.dot(x);
    if (hessian_noise_ > 0) v += Scalar(0.5) * d.curvature * x[d.coord] * x[d.coord];
    return v;
  }
  Vector<Scalar> component_gradient(std::uint64_t id, const Vector<Scalar>& x) const override {
    const Draw d = reconstruct(id);
    Vector<Scalar> g = core_->gradient(x) + d.offset;
    if (hessian_noise_ > 0) g[d.coord] += d.curvature * x[d.coord];
    return g;
  }
  bool has_component_hvp() const override { return true; }
  Vector<Scalar> component_hvp(std::uint64_t id, const Vector<Scalar>& x,
                               const Vector<Scalar>& v) const override {
    Vector<Scalar> out = core_->hvp(x, v);
    if (hessian_noise_ > 0) {
      const Draw d = reconstruct(id);
      out[d.coord] += d.curvature * v[d.coord];
    }
    return out;
  }

 private:
  struct Draw {
    Vector<Scalar> offset;
    Index coord = 0;
    Scalar curvature = 0;
  };

  Scalar domain_radius() const {
    const auto dom = core_->domain();
    return dom.kind == Domain<Scalar>::Kind::Unbounded ? Scalar(1) : dom.radius;
  }

  Draw reconstruct(std::uint64_t id) const {
    Rng rng(seed_ ^ detail::mix64(id + 0x5851f42d4c957f2dULL));
    const Index d = core_->dimension();
    Draw out;
    out.offset.resize(d);
    const Scalar scale = sigma_ / std::sqrt(static_cast<Scalar>(d));
    for (Index i = 0; i < d; ++i)
      out.offset[i] = scale * static_cast<Scalar>(detail::symmetric_uniform(rng));
    if (hessian_noise_ > 0) {
      out.coord = static_cast<Index>(rng.below(static_cast<std::uint64_t>(d)));
      out.curvature = hessian_noise_ * static_cast<Scalar>(detail::symmetric_uniform(rng));
    }
    return out;
  }

  std::shared_ptr<const SmoothCore<Scalar>> core_;
  Scalar sigma_;
  Scalar hessian_noise_;
  std::uint64_t seed_;
  SmoothnessConstants<Scalar> constants_;
};

enum class TestProblemName { SeparableQuartic, CoupledSaddle, RayleighCubic };

inline TestProblemName parse_problem_name(std::string_view name) {
  if (name == "separable-quartic") return TestProblemName::SeparableQuartic;
  if (name == "coupled-saddle") return TestProblemName::CoupledSaddle;
  if (name == "rayleigh-cubic") return TestProblemName::RayleighCubic;
  throw std::invalid_argument("unknown test problem: " + std::string(name));
}

inline const char* problem_name_string(TestProblemName name) {
  switch (name) {
    case TestProblemName::SeparableQuartic: return "separable-quartic";
    case TestProblemName::CoupledSaddle: return "coupled-saddle";
    case TestProblemName::RayleighCubic: return "rayleigh-cubic";
  }
  return "?";
}

template <typename Scalar>
std::shared_ptr<const SmoothCore<Scalar>> make_core(TestProblemName name, Index d,
                                                    std::uint64_t seed) {
  switch (name) {
    case TestProblemName::SeparableQuartic:
      return std::make_shared<QuarticCore<Scalar>>(d);
    case TestProblemName::CoupledSaddle:
      return std::make_shared<CoupledCore<Scalar>>(CoupledCore<Scalar>::saddle(d, seed));
    case TestProblemName::RayleighCubic:
      return std::make_shared<CoupledCore<Scalar>>(CoupledCore<Scalar>::rayleigh(d, seed));
  }
  throw std::invalid_argument("make_core: bad problem name");
}

template <typename Scalar>
std::shared_ptr<FiniteSumProblem<Scalar>> make_finite_sum_problem(
    TestProblemName name, Index d, Index n, Scalar sigma, std::uint64_t seed) {
  Rng base(seed);
  auto core = make_core<Scalar>(name, d, base.child(1).next_u64());
  return std::make_shared<FiniteSumLinearNoise<Scalar>>(core, n, sigma,
                                                        base.child(2).next_u64());
}

template <typename Scalar>
std::shared_ptr<Problem<Scalar>> make_stochastic_problem(TestProblemName name, Index d,
                                                         Scalar sigma, std::uint64_t seed,
                                                         Scalar hessian_noise = 0) {
  Rng base(seed);
  auto core = make_core<Scalar>(name, d, base.child(1).next_u64());
  return std::make_shared<StreamingLinearNoise<Scalar>>(
      core, sigma, base.child(2).next_u64(), hessian_noise);
}

}  // namespace flash
