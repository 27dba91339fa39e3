#pragma once

#include <algorithm>
#include <cmath>

#include "flash/problem.hpp"
#include "flash/rng.hpp"

namespace flash {

template <typename Scalar>
struct DerivativeReport {
  Index directions = 0;
  Scalar tolerance = 0;
  Scalar max_gradient_error = 0;   // directional derivative vs value differences
  Scalar max_hvp_error = 0;        // Hessian-vector product vs gradient differences
  Scalar max_component_error = 0;  // sampled component gradients vs component values
  bool pass = false;
};

// Central-difference audit of the expectation oracle at x.  Probes at least
// max(d, num_directions) random unit directions; errors are relative with the
// denominator floored at 1.  Also spot-checks a few sampled component
// gradients against component value differences.
template <typename Scalar>
DerivativeReport<Scalar> check_derivatives(const Problem<Scalar>& p, const Vector<Scalar>& x,
                                           Scalar tol, Rng& rng, Index num_directions = 0) {
  const Index d = p.dimension();
  const Index m = std::max(d, num_directions);
  const Scalar h = Scalar(1e-4) * std::max<Scalar>(1, x.norm());

  DerivativeReport<Scalar> report;
  report.directions = m;
  report.tolerance = tol;

  const Vector<Scalar> grad = p.gradient(x);
  for (Index k = 0; k < m; ++k) {
    const Vector<Scalar> u = rng.template unit_vector<Scalar>(d);
    const Scalar fd = (p.value(x + h * u) - p.value(x - h * u)) / (2 * h);
    const Scalar exact = grad.dot(u);
    report.max_gradient_error = std::max(
        report.max_gradient_error, std::abs(fd - exact) / std::max<Scalar>(1, std::abs(exact)));

    const Vector<Scalar> gfd = (p.gradient(x + h * u) - p.gradient(x - h * u)) / (2 * h);
    const Vector<Scalar> hv = p.hessian_vector(x, u);
    report.max_hvp_error =
        std::max(report.max_hvp_error, (gfd - hv).norm() / std::max<Scalar>(1, hv.norm()));
  }

  for (int k = 0; k < 3; ++k) {
    const std::uint64_t id = p.sample_component(rng);
    const Vector<Scalar> u = rng.template unit_vector<Scalar>(d);
    const Scalar fd =
        (p.component_value(id, x + h * u) - p.component_value(id, x - h * u)) / (2 * h);
    const Scalar exact = p.component_gradient(id, x).dot(u);
    report.max_component_error = std::max(
        report.max_component_error, std::abs(fd - exact) / std::max<Scalar>(1, std::abs(exact)));
  }

  report.pass = report.max_gradient_error <= tol && report.max_hvp_error <= tol &&
                report.max_component_error <= tol;
  return report;
}

}  // namespace flash
