#pragma once

#include "rnr/robust_fit.hpp"
#include "rnr/types.hpp"

namespace rnr {

/// f(x) = sum_i beta_i K(x, knot_i) + alpha1 . x + alpha0 with K(x, y) = r^2 log r.
struct ThinPlateModel {
  Vector beta;
  Eigen::Vector2d alpha1 = Eigen::Vector2d::Zero();
  double alpha0 = 0.0;
  PointMatrix knots;

  /// Roughness value beta^T K beta.
  double penalty() const;
};

/// mu-independent pieces of the thin-plate problem: the radial Gram matrix, the affine
/// null-space basis T = [1 | x], its QR split T = Q1 R, and the spectrum of Q2^T K Q2 where
/// Q2 spans the orthogonal complement of range(T).
class ThinPlateBasis {
 public:
  explicit ThinPlateBasis(PointMatrix knots);

  Index size() const { return knots_.rows(); }
  const PointMatrix& knots() const { return knots_; }
  const Matrix& gram() const { return gram_; }
  const Matrix& null_basis() const { return t_; }

  /// beta = Q2 (Q2^T K Q2 + mu I)^{-1} Q2^T as an N x N map.
  Matrix beta_map(double mu) const;
  /// Full coefficient map: rows 0..N-1 give beta, then alpha0, alpha1_x, alpha1_y.
  Matrix coefficient_map(double mu) const;

  ThinPlateModel fit(const Vector& target, double mu) const;
  DesignOperator design(double mu) const;

 private:
  PointMatrix knots_;
  Matrix gram_;
  Matrix t_;
  Matrix q1_;
  Matrix q2_;
  Eigen::Matrix3d r_;
  Matrix inner_vectors_;  // eigenvectors of Q2^T K Q2
  Vector inner_values_;
};

/// Minimizes |target - K beta - T alpha|^2 + mu beta^T K beta subject to T^T beta = 0.
ThinPlateModel thin_plate_fit(const PointMatrix& knots, const Vector& target, double mu);

double thin_plate_eval(const ThinPlateModel& model, const Eigen::Vector2d& x);
Vector thin_plate_eval(const ThinPlateModel& model, const PointMatrix& queries);

/// Natural cubic spline with knots at the data, in the value-based (cardinal) basis:
/// b_j interpolates the j-th unit vector, so B is the identity and theta holds the values at
/// the knots. Psi is the exact integral of products of second derivatives.
struct CubicSplineSystem {
  Vector knots;
  Matrix basis;     // B, [B]_ij = b_j(t_i)
  Matrix penalty;   // Psi, [Psi]_ij = int b_i'' b_j''
  Matrix curvature; // maps theta to second derivatives at every knot (zero at the ends)
  Matrix second_differences;  // Q, N x (N-2)
  Matrix curvature_gram;      // R, (N-2) x (N-2); Psi = Q R^{-1} Q^T


  Index size() const { return knots.size(); }
};

CubicSplineSystem natural_spline_system(const Vector& knots);

/// theta = (B^T B + mu Psi)^{-1} B^T target, evaluated in the Reinsch form
/// theta = target - mu Q (R + mu Q^T Q)^{-1} Q^T target, which stays accurate when mu |Psi| is huge.
Vector smoothing_spline_fit(const CubicSplineSystem& system, const Vector& target, double mu);

/// Evaluates sum_j theta_j b_j(t); linear beyond the boundary knots.
double natural_spline_eval(const CubicSplineSystem& system, const Vector& theta, double t);
Vector natural_spline_eval(const CubicSplineSystem& system, const Vector& theta, const Vector& t);

DesignOperator spline_design_operator(const CubicSplineSystem& system, double mu);
DesignOperator spline_design_operator(const ThinPlateBasis& basis, double mu);

class ThinPlateSmoother final : public SmootherFamily {
 public:
  explicit ThinPlateSmoother(PointMatrix knots) : basis_(std::move(knots)) {}

  Index size() const override { return basis_.size(); }
  DesignOperator design(double mu) const override { return basis_.design(mu); }
  Vector holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                         const std::vector<Index>& test) const override;
  Vector evaluate(const RobustFit& fit, const PointMatrix& queries) const override;

  const ThinPlateBasis& basis() const { return basis_; }

 private:
  ThinPlateBasis basis_;
};

class CubicSplineSmoother final : public SmootherFamily {
 public:
  explicit CubicSplineSmoother(const Vector& knots);

  Index size() const override { return system_.size(); }
  DesignOperator design(double mu) const override;
  Vector holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                         const std::vector<Index>& test) const override;
  Vector evaluate(const RobustFit& fit, const PointMatrix& queries) const override;

  const CubicSplineSystem& system() const { return system_; }

 private:
  CubicSplineSystem system_;
  Matrix value_penalty_vectors_;  // eigenvectors of B^{-T} Psi B^{-1}
  Vector value_penalty_values_;
};

}  // namespace rnr
