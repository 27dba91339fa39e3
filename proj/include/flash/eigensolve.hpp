#pragma once

#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "flash/problem.hpp"
#include "flash/types.hpp"

namespace flash {

template <typename Scalar>
struct EigenResult {
  Vector<Scalar> eigenvalues;   // ascending
  Matrix<Scalar> eigenvectors;  // orthonormal columns, matching order
  Vector<Scalar> residuals;     // ||H v_i - lambda_i v_i||_2

  Scalar min_eigenvalue() const { return eigenvalues[0]; }
  const auto min_eigenvector() const { return eigenvectors.col(0); }
};

// Dense symmetric eigendecomposition used for certification and as the ground
// truth in tests.  Rejects dimensions above 512: certification is meant for
// small dense Hessians, and refusing loudly beats silently taking minutes.
template <typename Scalar>
EigenResult<Scalar> dense_eigensolve(const Matrix<Scalar>& h) {
  if (h.rows() == 0 || h.rows() != h.cols())
    throw std::invalid_argument("dense_eigensolve: H must be square and non-empty");
  if (h.rows() > 512)
    throw std::invalid_argument("dense_eigensolve: dimension above 512 not supported");
  if (!h.allFinite())
    throw std::invalid_argument("dense_eigensolve: H has non-finite entries");
  const Scalar scale = std::max<Scalar>(1, h.template lpNorm<Eigen::Infinity>());
  if ((h - h.transpose()).template lpNorm<Eigen::Infinity>() > Scalar(1e-8) * scale)
    throw std::invalid_argument("dense_eigensolve: H is not symmetric");

  const Matrix<Scalar> sym = (h + h.transpose()) / 2;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("dense_eigensolve: eigensolver failed to converge");

  EigenResult<Scalar> out;
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  out.residuals.resize(sym.rows());
  const Scalar h_norm = sym.norm();
  for (Index i = 0; i < sym.rows(); ++i) {
    out.residuals[i] =
        (sym * out.eigenvectors.col(i) - out.eigenvalues[i] * out.eigenvectors.col(i)).norm();
    if (out.residuals[i] > Scalar(1e-8) * std::max<Scalar>(1, h_norm))
      throw std::runtime_error("dense_eigensolve: residual check failed");
  }
  return out;
}

// Materializes the exact Hessian column by column through the expectation
// oracle, then symmetrizes.  Certification only; does not touch counters.
template <typename Scalar>
Matrix<Scalar> dense_hessian(const Problem<Scalar>& p, const Vector<Scalar>& x) {
  const Index d = p.dimension();
  if (d > 512)
    throw std::invalid_argument("dense_hessian: dimension above 512 not supported");
  Matrix<Scalar> h(d, d);
  Vector<Scalar> e = Vector<Scalar>::Zero(d);
  for (Index j = 0; j < d; ++j) {
    e[j] = 1;
    h.col(j) = p.hessian_vector(x, e);
    e[j] = 0;
  }
  return (h + h.transpose()) / 2;
}

}  // namespace flash
