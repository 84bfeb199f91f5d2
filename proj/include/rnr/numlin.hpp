#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "rnr/error.hpp"

namespace rnr {

/// Cholesky factor L of a symmetric positive-definite matrix, A = L L^T.
///
/// The factor is computed once and reused for any number of right-hand sides, which is how
/// the alternating solver amortizes its per-iteration ridge solves.
template <typename Scalar>
class SpdFactorization {
 public:
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit SpdFactorization(const MatrixType& a) : lower_(a.rows(), a.cols()) {
    if (a.rows() != a.cols()) throw InputError("spd_factor: matrix is not square");
    const Eigen::Index n = a.rows();
    lower_.setZero();
    // Left-looking column Cholesky; reads the lower triangle only.
    for (Eigen::Index j = 0; j < n; ++j) {
      Scalar pivot = a(j, j);
      if (j > 0) pivot -= lower_.row(j).head(j).squaredNorm();
      if (!(pivot > Scalar(0))) throw NotPositiveDefinite(j, static_cast<double>(pivot));
      const Scalar diag = std::sqrt(pivot);
      lower_(j, j) = diag;
      if (j + 1 < n) {
        auto below = lower_.col(j).tail(n - j - 1);
        below = a.col(j).tail(n - j - 1);
        if (j > 0) below.noalias() -= lower_.bottomLeftCorner(n - j - 1, j) * lower_.row(j).head(j).transpose();
        below /= diag;
      }
    }
  }

  Eigen::Index dimension() const { return lower_.rows(); }
  const MatrixType& lower() const { return lower_; }

  MatrixType reconstruct() const { return lower_ * lower_.transpose(); }

  template <typename Rhs>
  auto solve(const Eigen::MatrixBase<Rhs>& b) const {
    if (b.rows() != dimension())
      throw InputError("spd_solve: right-hand side has " + std::to_string(b.rows()) +
                       " rows, factorization has dimension " + std::to_string(dimension()));
    using Result = Eigen::Matrix<Scalar, Rhs::RowsAtCompileTime, Rhs::ColsAtCompileTime>;
    Result x = lower_.template triangularView<Eigen::Lower>().solve(b);
    lower_.transpose().template triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }

  MatrixType inverse() const {
    return solve(MatrixType::Identity(dimension(), dimension()));
  }

 private:
  MatrixType lower_;
};

template <typename Derived>
SpdFactorization<typename Derived::Scalar> spd_factor(const Eigen::MatrixBase<Derived>& a) {
  return SpdFactorization<typename Derived::Scalar>(a.eval());
}

template <typename Scalar, typename Rhs>
auto spd_solve(const SpdFactorization<Scalar>& fact, const Eigen::MatrixBase<Rhs>& b) {
  return fact.solve(b);
}

/// Symmetric square root of a symmetric positive-semidefinite matrix.
///
/// Eigenvalues below tol * |M|_2 are clamped to zero; an eigenvalue below -tol * |M|_2 means
/// the matrix is materially indefinite and is rejected.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> psd_sqrt(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.rows() != m.cols()) throw InputError("psd_sqrt: matrix is not square");
  if (m.rows() == 0) return MatrixType(0, 0);
  const MatrixType sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixType> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  const auto& values = eig.eigenvalues();
  const Scalar scale = values.cwiseAbs().maxCoeff();
  const Scalar floor = tol * scale;
  if (values.minCoeff() < -floor)
    throw NumericalError("psd_sqrt: matrix is indefinite (eigenvalue " +
                         std::to_string(static_cast<double>(values.minCoeff())) + ")");
  const auto roots = values.unaryExpr([floor](Scalar v) { return v < floor ? Scalar(0) : std::sqrt(v); });
  const auto& vecs = eig.eigenvectors();
  MatrixType s = vecs * roots.asDiagonal() * vecs.transpose();
  return (s + s.transpose()) / Scalar(2);
}

}  // namespace rnr
