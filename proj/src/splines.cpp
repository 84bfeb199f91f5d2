#include "rnr/splines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rnr/error.hpp"
#include "rnr/kernels.hpp"
#include "rnr/numlin.hpp"

namespace rnr {

namespace {

Matrix symmetrized(const Matrix& m) { return (m + m.transpose()) / 2.0; }

Matrix spectral(const Matrix& vectors, const Vector& values) {
  return symmetrized(vectors * values.asDiagonal() * vectors.transpose());
}

PointMatrix select_rows(const PointMatrix& points, const std::vector<Index>& idx) {
  PointMatrix out(static_cast<Index>(idx.size()), points.cols());
  for (std::size_t a = 0; a < idx.size(); ++a) out.row(static_cast<Index>(a)) = points.row(idx[a]);
  return out;
}

Vector select(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out(static_cast<Index>(a)) = v(idx[a]);
  return out;
}

ThinPlateModel model_from_fit(const RobustFit& fit, const PointMatrix& knots) {
  ThinPlateModel model;
  model.beta = fit.beta;
  model.knots = knots;
  if (fit.alpha.size() == 3) {
    model.alpha0 = fit.alpha(0);
    model.alpha1 = fit.alpha.tail<2>();
  }
  return model;
}

}  // namespace

double ThinPlateModel::penalty() const {
  return beta.dot(gram_matrix(KernelSpec::thin_plate(), knots).entries * beta);
}

ThinPlateBasis::ThinPlateBasis(PointMatrix knots) : knots_(std::move(knots)) {
  const Index n = knots_.rows();
  if (knots_.cols() != 2) throw InputError("thin-plate spline: knots must be 2-D points");
  if (n < 3) throw InputError("thin-plate spline: need at least 3 knots");
  gram_ = gram_matrix(KernelSpec::thin_plate(), knots_).entries;
  t_.resize(n, 3);
  t_.col(0).setOnes();
  t_.rightCols(2) = knots_;

  Eigen::HouseholderQR<Matrix> qr(t_);
  r_ = qr.matrixQR().topLeftCorner(3, 3).triangularView<Eigen::Upper>();
  const double scale = t_.norm();
  for (int i = 0; i < 3; ++i)
    if (std::abs(r_(i, i)) <= 1e-10 * scale) throw InputError("thin-plate spline: knots are collinear");
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  q1_ = q.leftCols(3);
  q2_ = q.rightCols(n - 3);

  if (n > 3) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(q2_.transpose() * gram_ * q2_));
    if (eig.info() != Eigen::Success) throw NumericalError("thin-plate spline: eigendecomposition failed");
    inner_vectors_ = q2_ * eig.eigenvectors();
    inner_values_ = eig.eigenvalues();
  } else {
    inner_vectors_ = Matrix::Zero(n, 0);
    inner_values_ = Vector::Zero(0);
  }
}

Matrix ThinPlateBasis::beta_map(double mu) const {
  if (!(mu >= 0.0)) throw InputError("thin-plate spline: mu must be nonnegative");
  const Vector shifted = inner_values_.array() + mu;
  if (shifted.size() > 0 && !(shifted.minCoeff() > 0.0))
    throw NumericalError("thin-plate spline: reduced system is singular");
  return spectral(inner_vectors_, shifted.cwiseInverse());
}

Matrix ThinPlateBasis::coefficient_map(double mu) const {
  const Index n = size();
  const Matrix c = beta_map(mu);
  Matrix out(n + 3, n);
  out.topRows(n) = c;
  const Matrix remainder = Matrix::Identity(n, n) - gram_ * c;
  out.bottomRows(3) = r_.triangularView<Eigen::Upper>().solve(q1_.transpose() * remainder);
  return out;
}

ThinPlateModel ThinPlateBasis::fit(const Vector& target, double mu) const {
  if (target.size() != size()) throw InputError("thin-plate fit: target length does not match knot count");
  if (!(mu >= 0.0)) throw InputError("thin-plate fit: mu must be nonnegative");
  const Vector shifted = inner_values_.array() + mu;
  if (shifted.size() > 0 && !(shifted.minCoeff() > 0.0))
    throw NumericalError("thin-plate spline: reduced system is singular");
  ThinPlateModel model;
  model.knots = knots_;
  model.beta = inner_vectors_ * (inner_vectors_.transpose() * target).cwiseQuotient(shifted);
  const Eigen::Vector3d alpha =
      r_.triangularView<Eigen::Upper>().solve(q1_.transpose() * (target - gram_ * model.beta));
  model.alpha0 = alpha(0);
  model.alpha1 = alpha.tail<2>();
  return model;
}

DesignOperator ThinPlateBasis::design(double mu) const {
  if (!(mu > 0.0)) throw InputError("thin-plate design: mu must be positive");
  const Index n = size();
  const Vector shifted = inner_values_.array() + mu;
  if (shifted.size() > 0 && !(shifted.minCoeff() > 0.0))
    throw NumericalError("thin-plate spline: reduced system is singular");
  // Residual of the smoother is z - f = mu * beta.
  Matrix residual = spectral(inner_vectors_, (mu / shifted.array()).matrix());
  Matrix hat = Matrix::Identity(n, n) - residual;
  const Vector e = inner_values_.cwiseMax(0.0);
  Matrix penalty = spectral(inner_vectors_, (e.array() / shifted.array().square()).matrix());
  Matrix root = spectral(inner_vectors_, ((mu * e.array()).sqrt() / shifted.array()).matrix());
  return make_design_operator(mu, std::move(hat), std::move(residual), coefficient_map(mu), std::move(penalty), n,
                              std::move(root));
}

ThinPlateModel thin_plate_fit(const PointMatrix& knots, const Vector& target, double mu) {
  return ThinPlateBasis(knots).fit(target, mu);
}

double thin_plate_eval(const ThinPlateModel& model, const Eigen::Vector2d& x) {
  const KernelSpec spec = KernelSpec::thin_plate();
  double value = model.alpha0 + model.alpha1.dot(x);
  for (Index i = 0; i < model.knots.rows(); ++i)
    value += model.beta(i) * eval_kernel(spec, x, model.knots.row(i).transpose());
  return value;
}

Vector thin_plate_eval(const ThinPlateModel& model, const PointMatrix& queries) {
  if (queries.cols() != 2) throw InputError("thin-plate eval: query points must be 2-D");
  Vector out = cross_kernel(KernelSpec::thin_plate(), queries, model.knots) * model.beta;
  out.array() += model.alpha0;
  out += queries * model.alpha1;
  return out;
}

CubicSplineSystem natural_spline_system(const Vector& knots) {
  const Index n = knots.size();
  if (n < 3) throw InputError("natural spline: need at least 3 knots");
  for (Index i = 0; i + 1 < n; ++i)
    if (!(knots(i + 1) > knots(i)))
      throw InputError("natural spline: knots must be strictly increasing (violation at index " +
                       std::to_string(i + 1) + ")");
  const Vector h = knots.tail(n - 1) - knots.head(n - 1);

  // Second differences Q (N x N-2) and the interior curvature coupling R (N-2 x N-2).
  Matrix q = Matrix::Zero(n, n - 2);
  Matrix r = Matrix::Zero(n - 2, n - 2);
  for (Index j = 1; j + 1 < n; ++j) {
    const Index c = j - 1;
    q(j - 1, c) = 1.0 / h(j - 1);
    q(j, c) = -1.0 / h(j - 1) - 1.0 / h(j);
    q(j + 1, c) = 1.0 / h(j);
    r(c, c) = (h(j - 1) + h(j)) / 3.0;
    if (c + 1 < n - 2) {
      r(c, c + 1) = h(j) / 6.0;
      r(c + 1, c) = h(j) / 6.0;
    }
  }

  CubicSplineSystem system;
  system.knots = knots;
  system.basis = Matrix::Identity(n, n);
  system.curvature = Matrix::Zero(n, n);
  system.curvature.middleRows(1, n - 2) = spd_factor(r).solve(q.transpose() * system.basis);
  system.second_differences = q;
  system.curvature_gram = r;

  // f'' is linear on each interval, so int (f'')^2 = h/3 (g_i^2 + g_i g_{i+1} + g_{i+1}^2).
  Matrix interval_gram = Matrix::Zero(n, n);
  for (Index i = 0; i + 1 < n; ++i) {
    interval_gram(i, i) += h(i) / 3.0;
    interval_gram(i + 1, i + 1) += h(i) / 3.0;
    interval_gram(i, i + 1) += h(i) / 6.0;
    interval_gram(i + 1, i) += h(i) / 6.0;
  }
  system.penalty = symmetrized(system.curvature.transpose() * interval_gram * system.curvature);
  return system;
}

Vector smoothing_spline_fit(const CubicSplineSystem& system, const Vector& target, double mu) {
  if (target.size() != system.size()) throw InputError("smoothing spline: target length does not match knots");
  if (!(mu >= 0.0)) throw InputError("smoothing spline: mu must be nonnegative");
  // B = I in the cardinal basis, so the normal equations reduce to (I + mu Q R^{-1} Q^T) theta = target.
  const Matrix& q = system.second_differences;
  if (mu == 0.0) return target;
  const Vector gamma = spd_factor(Matrix(system.curvature_gram + mu * q.transpose() * q)).solve(q.transpose() * target);
  return target - mu * (q * gamma);
}

double natural_spline_eval(const CubicSplineSystem& system, const Vector& theta, double t) {
  const Vector g = system.basis * theta;
  const Vector gamma = system.curvature * theta;
  const Vector& x = system.knots;
  const Index n = x.size();
  if (t <= x(0)) {
    const double h = x(1) - x(0);
    const double slope = (g(1) - g(0)) / h - h / 6.0 * gamma(1);
    return g(0) + slope * (t - x(0));
  }
  if (t >= x(n - 1)) {
    const double h = x(n - 1) - x(n - 2);
    const double slope = (g(n - 1) - g(n - 2)) / h + h / 6.0 * gamma(n - 2);
    return g(n - 1) + slope * (t - x(n - 1));
  }
  const Index i = static_cast<Index>(std::upper_bound(x.data(), x.data() + n, t) - x.data()) - 1;
  const double h = x(i + 1) - x(i);
  const double a = t - x(i);
  const double b = x(i + 1) - t;
  return (b * g(i) + a * g(i + 1)) / h -
         a * b / 6.0 * ((1.0 + a / h) * gamma(i + 1) + (1.0 + b / h) * gamma(i));
}

Vector natural_spline_eval(const CubicSplineSystem& system, const Vector& theta, const Vector& t) {
  Vector out(t.size());
  for (Index i = 0; i < t.size(); ++i) out(i) = natural_spline_eval(system, theta, t(i));
  return out;
}

namespace {

struct ValuePenaltySpectrum {
  Matrix vectors;
  Vector values;
};

// Spectrum of the penalty expressed on fitted values, P = B^{-T} Psi B^{-1}.
ValuePenaltySpectrum value_penalty_spectrum(const CubicSplineSystem& system) {
  const Eigen::PartialPivLU<Matrix> lu(system.basis);
  const Matrix b_inv = lu.inverse();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(b_inv.transpose() * system.penalty * b_inv));
  if (eig.info() != Eigen::Success) throw NumericalError("natural spline: eigendecomposition failed");
  return {eig.eigenvectors(), eig.eigenvalues().cwiseMax(0.0)};
}

DesignOperator cubic_design(const CubicSplineSystem& system, const ValuePenaltySpectrum& spectrum, double mu) {
  if (!(mu > 0.0)) throw InputError("spline design: mu must be positive");
  const auto& e = spectrum.values.array();
  Matrix hat = spectral(spectrum.vectors, (1.0 / (1.0 + mu * e)).matrix());
  Matrix residual = spectral(spectrum.vectors, (mu * e / (1.0 + mu * e)).matrix());
  Matrix penalty = spectral(spectrum.vectors, (e / (1.0 + mu * e).square()).matrix());
  Matrix root = spectral(spectrum.vectors, ((mu * e).sqrt() / (1.0 + mu * e)).matrix());
  Matrix coef = Eigen::PartialPivLU<Matrix>(system.basis).solve(hat);
  const Index n = system.size();
  return make_design_operator(mu, std::move(hat), std::move(residual), std::move(coef), std::move(penalty), n,
                              std::move(root));
}

}  // namespace

DesignOperator spline_design_operator(const CubicSplineSystem& system, double mu) {
  return cubic_design(system, value_penalty_spectrum(system), mu);
}

DesignOperator spline_design_operator(const ThinPlateBasis& basis, double mu) { return basis.design(mu); }

Vector ThinPlateSmoother::holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                                          const std::vector<Index>& test) const {
  const ThinPlateBasis sub(select_rows(basis_.knots(), train));
  return thin_plate_eval(sub.fit(target, mu), select_rows(basis_.knots(), test));
}

Vector ThinPlateSmoother::evaluate(const RobustFit& fit, const PointMatrix& queries) const {
  return thin_plate_eval(model_from_fit(fit, basis_.knots()), queries);
}

CubicSplineSmoother::CubicSplineSmoother(const Vector& knots) : system_(natural_spline_system(knots)) {
  const auto spectrum = value_penalty_spectrum(system_);
  value_penalty_vectors_ = spectrum.vectors;
  value_penalty_values_ = spectrum.values;
}

DesignOperator CubicSplineSmoother::design(double mu) const {
  return cubic_design(system_, {value_penalty_vectors_, value_penalty_values_}, mu);
}

Vector CubicSplineSmoother::holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                                            const std::vector<Index>& test) const {
  const CubicSplineSystem sub = natural_spline_system(select(system_.knots, train));
  const Vector theta = smoothing_spline_fit(sub, target, mu);
  return natural_spline_eval(sub, theta, select(system_.knots, test));
}

Vector CubicSplineSmoother::evaluate(const RobustFit& fit, const PointMatrix& queries) const {
  return natural_spline_eval(system_, fit.beta, Vector(queries.col(0)));
}

}  // namespace rnr
