#include "rnr/robust_fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "rnr/error.hpp"

namespace rnr {

namespace {

Matrix symmetrized(const Matrix& m) { return (m + m.transpose()) / 2.0; }

void check_same_length(const GramMatrix& gram, const Vector& y, const char* who) {
  if (y.size() != gram.size())
    throw InputError(std::string(who) + ": response length " + std::to_string(y.size()) +
                     " does not match gram dimension " + std::to_string(gram.size()));
}

Vector soft_threshold_all(const Vector& z, double gamma) {
  return z.unaryExpr([gamma](double v) { return soft_threshold(v, gamma); });
}

Matrix principal_submatrix(const Matrix& k, const std::vector<Index>& idx) {
  const auto m = static_cast<Index>(idx.size());
  Matrix out(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) out(a, b) = k(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  return out;
}

}  // namespace

std::vector<Index> RobustFit::outlier_support(double threshold) const {
  std::vector<Index> support;
  for (Index i = 0; i < outliers.size(); ++i)
    if (std::abs(outliers(i)) > threshold) support.push_back(i);
  return support;
}

DesignOperator make_design_operator(double mu, Matrix hat_matrix, Matrix residual_operator,
                                    Matrix coefficient_map, Matrix penalty_form, Index kernel_coefficients) {
  if (!(mu > 0.0)) throw InputError("design operator: mu must be positive");
  Matrix root = psd_sqrt(Matrix(mu * penalty_form));
  return make_design_operator(mu, std::move(hat_matrix), std::move(residual_operator), std::move(coefficient_map),
                              std::move(penalty_form), kernel_coefficients, std::move(root));
}

DesignOperator make_design_operator(double mu, Matrix hat_matrix, Matrix residual_operator,
                                    Matrix coefficient_map, Matrix penalty_form, Index kernel_coefficients,
                                    Matrix penalty_root) {
  if (!(mu > 0.0)) throw InputError("design operator: mu must be positive");
  const Index n = hat_matrix.rows();
  if (residual_operator.rows() != n || penalty_root.rows() != n || penalty_root.cols() != n)
    throw InputError("design operator: block sizes do not match");
  DesignOperator op;
  op.mu = mu;
  op.design.resize(2 * n, n);
  op.design.topRows(n) = residual_operator;
  op.design.bottomRows(n) = penalty_root;
  op.hat_matrix = std::move(hat_matrix);
  op.residual_operator = std::move(residual_operator);
  op.coefficient_map = std::move(coefficient_map);
  op.penalty_form = std::move(penalty_form);
  op.kernel_coefficients = kernel_coefficients;
  return op;
}

KernelRidge::KernelRidge(const GramMatrix& gram, double mu)
    : mu_(mu), factor_([&] {
        if (!(mu > 0.0)) throw InputError("kernel ridge: mu must be positive");
        return SpdFactorization<double>(gram.entries + mu * Matrix::Identity(gram.size(), gram.size()));
      }()) {}

Vector KernelRidge::coefficients(const Vector& target) const { return factor_.solve(target); }

Vector ridge_step(const GramMatrix& gram, double mu, const Vector& target) {
  check_same_length(gram, target, "ridge_step");
  return KernelRidge(gram, mu).coefficients(target);
}

double l1_objective(const GramMatrix& gram, const Vector& y, const RobustFit& fit, double mu, double lambda1) {
  const Vector kb = gram.entries * fit.beta;
  return (y - kb - fit.outliers).squaredNorm() + mu * fit.beta.dot(kb) + lambda1 * fit.outliers.lpNorm<1>();
}

RobustFit am_solve(const GramMatrix& gram, const Vector& y, double mu, double lambda1, const AmOptions& options) {
  check_same_length(gram, y, "am_solve");
  if (!(lambda1 >= 0.0)) throw InputError("am_solve: lambda1 must be nonnegative");
  if (!(options.tol > 0.0)) throw InputError("am_solve: tol must be positive");
  const KernelRidge ridge(gram, mu);
  const Matrix& k = gram.entries;

  RobustFit fit;
  fit.mu = mu;
  fit.lambda = lambda1;
  Vector o = Vector::Zero(y.size());
  for (long iter = 1; iter <= options.max_iter; ++iter) {
    const Vector beta = ridge.coefficients(y - o);
    const Vector kb = k * beta;
    Vector next = soft_threshold_all(y - kb, lambda1 / 2.0);
    const double change = (next - o).lpNorm<Eigen::Infinity>();
    o = std::move(next);
    if (options.objective_trace)
      options.objective_trace->push_back((y - kb - o).squaredNorm() + mu * beta.dot(kb) + lambda1 * o.lpNorm<1>());
    if (change <= options.tol) {
      fit.iterations = iter;
      fit.outliers = o;
      fit.beta = ridge.coefficients(y - o);
      fit.fitted_values = k * fit.beta;
      fit.residuals = y - fit.fitted_values;
      fit.objective = l1_objective(gram, y, fit, mu, lambda1);
      return fit;
    }
  }
  throw ConvergenceError("am_solve did not converge", o, options.max_iter);
}

KernelSpectrum kernel_spectrum(const GramMatrix& gram) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(gram.entries));
  if (eig.info() != Eigen::Success) throw NumericalError("kernel spectrum: eigendecomposition failed");
  return {eig.eigenvectors(), eig.eigenvalues().cwiseMax(0.0)};
}

DesignOperator build_design(const GramMatrix& gram, double mu) { return build_design(kernel_spectrum(gram), mu); }

DesignOperator build_design(const KernelSpectrum& spectrum, double mu) {
  if (!(mu > 0.0)) throw InputError("build_design: mu must be positive");
  const Index n = spectrum.values.size();
  const Matrix& v = spectrum.vectors;
  const Eigen::ArrayXd d = spectrum.values.array();
  const Eigen::ArrayXd inv = 1.0 / (d + mu);
  auto form = [&](const Eigen::ArrayXd& diag) { return symmetrized(v * diag.matrix().asDiagonal() * v.transpose()); };
  // I - K Gamma = mu Gamma, and (mu K)^{1/2} Gamma is the symmetric root of mu Gamma K Gamma.
  Matrix gamma = form(inv);
  Matrix hat = form(d * inv);
  Matrix residual = form(mu * inv);
  Matrix penalty = form(d * inv * inv);
  Matrix root = form((mu * d).sqrt() * inv);
  DesignOperator op = make_design_operator(mu, std::move(hat), std::move(residual), std::move(gamma), std::move(penalty),
                                           n, std::move(root));

  if (n <= 50) {
    const Matrix& r = op.residual_operator;
    const Matrix expected = r.transpose() * r + mu * op.penalty_form;
    const Matrix actual = op.design.transpose() * op.design;
    const double scale = std::max(1.0, expected.cwiseAbs().maxCoeff());
    if ((actual - expected).cwiseAbs().maxCoeff() > 1e-8 * scale)
      throw NumericalError("build_design: X^T X does not reproduce the inner quadratic form");
  }
  return op;
}

RobustFit fit_from_outliers(const DesignOperator& design, const Vector& y, const Vector& outliers, double lambda1) {
  if (y.size() != design.size() || outliers.size() != design.size())
    throw InputError("fit_from_outliers: vector length does not match design size");
  const Vector z = y - outliers;
  const Vector coef = design.coefficient_map * z;
  RobustFit fit;
  fit.mu = design.mu;
  fit.lambda = lambda1;
  fit.outliers = outliers;
  fit.beta = coef.head(design.kernel_coefficients);
  fit.alpha = coef.tail(coef.size() - design.kernel_coefficients);
  fit.fitted_values = design.hat_matrix * z;
  fit.residuals = y - fit.fitted_values;
  fit.objective = (design.residual_operator * z).squaredNorm() + design.mu * z.dot(design.penalty_form * z) +
                  lambda1 * outliers.lpNorm<1>();
  return fit;
}

LassoProblem<double> lasso_problem(const DesignOperator& design, const Vector& y) {
  if (y.size() != design.size()) throw InputError("lasso_problem: response length does not match design");
  return LassoProblem<double>(design.design, design.design * y);
}

RobustFit lasso_fit(const DesignOperator& design, const Vector& y, double lambda1, const Vector& init,
                    const LassoOptions<double>& options) {
  const LassoSolver<double> solver(lasso_problem(design, y));
  const Vector start = init.size() == 0 ? Vector::Zero(design.size()) : init;
  return fit_from_outliers(design, y, solver.solve(lambda1, start, options), lambda1);
}

RobustFit direct_lasso_fit(const GramMatrix& gram, const Vector& y, double mu, double lambda1,
                           const LassoOptions<double>& options) {
  check_same_length(gram, y, "direct_lasso_fit");
  return lasso_fit(build_design(gram, mu), y, lambda1, Vector(), options);
}

RobustificationPath<double> robustification_path(const DesignOperator& design, const Vector& y, Index g_lambda,
                                                 double epsilon_ratio, const LassoOptions<double>& options) {
  auto out = LassoSolver<double>(lasso_problem(design, y)).path(g_lambda, epsilon_ratio, options);
  out.mu = design.mu;
  return out;
}

double log_surrogate_objective(const DesignOperator& design, const Vector& y, const Vector& outliers,
                               double lambda0, double delta) {
  const Vector z = y - outliers;
  return (design.design * z).squaredNorm() + lambda0 * (outliers.array().abs() + delta).log().sum();
}

RobustFit reweighted_refine(const DesignOperator& design, const Vector& y, double lambda0, double delta,
                            const Vector& init, int iterations, const LassoOptions<double>& options,
                            std::vector<double>* objective_trace) {
  if (!(delta > 0.0)) throw InputError("reweighted_refine: delta must be positive");
  if (iterations < 1) throw InputError("reweighted_refine: need at least one iteration");
  if (!(lambda0 >= 0.0)) throw InputError("reweighted_refine: lambda0 must be nonnegative");
  if (init.size() != design.size()) throw InputError("reweighted_refine: initial outlier vector has wrong length");

  const LassoSolver<double> solver(lasso_problem(design, y));
  Vector o = init;
  if (objective_trace) objective_trace->push_back(log_surrogate_objective(design, y, o, lambda0, delta));
  for (int k = 1; k <= iterations; ++k) {
    const Vector weights = (o.array().abs() + delta).inverse().matrix();
    try {
      o = solver.solve(lambda0, o, weights, options);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("reweighted iteration " + std::to_string(k) + ": " + e.reason(), e.last_iterate(),
                             e.iterations());
    }
    if (objective_trace) objective_trace->push_back(log_surrogate_objective(design, y, o, lambda0, delta));
  }
  RobustFit fit = fit_from_outliers(design, y, o, lambda0);
  fit.objective = log_surrogate_objective(design, y, o, lambda0, delta);
  fit.iterations = iterations;
  return fit;
}

double huber_rho(double u, double lambda1) {
  const double a = std::abs(u);
  if (a <= lambda1 / 2.0) return u * u;
  return lambda1 * a - lambda1 * lambda1 / 4.0;
}

double huber_cost(const Vector& residuals, double lambda1, double mu, double rkhs_norm_sq) {
  if (!(lambda1 >= 0.0)) throw InputError("huber_cost: lambda1 must be nonnegative");
  double total = 0.0;
  for (Index i = 0; i < residuals.size(); ++i) total += huber_rho(residuals(i), lambda1);
  return total + mu * rkhs_norm_sq;
}

double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (Index i = 1; i <= k; ++i) out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(out);
}

SubsetFit subset_ridge_fit(const GramMatrix& gram, const Vector& y, double mu, const std::vector<Index>& retained) {
  check_same_length(gram, y, "subset_ridge_fit");
  const Index n = gram.size();
  SubsetFit out;
  out.retained = retained;
  RobustFit& fit = out.fit;
  fit.mu = mu;
  fit.beta = Vector::Zero(n);
  if (!retained.empty()) {
    const Matrix ks = principal_submatrix(gram.entries, retained);
    Vector ys(static_cast<Index>(retained.size()));
    for (std::size_t a = 0; a < retained.size(); ++a) ys(static_cast<Index>(a)) = y(retained[a]);
    const Vector bs = spd_factor(ks + mu * Matrix::Identity(ks.rows(), ks.cols())).solve(ys);
    for (std::size_t a = 0; a < retained.size(); ++a) fit.beta(retained[a]) = bs(static_cast<Index>(a));
    out.cost = (ys - ks * bs).squaredNorm() + mu * bs.dot(ks * bs);
  }
  fit.fitted_values = gram.entries * fit.beta;
  fit.residuals = y - fit.fitted_values;
  fit.outliers = fit.residuals;
  for (Index i : retained) fit.outliers(i) = 0.0;
  fit.objective = out.cost;
  return out;
}

SubsetFit vlts_bruteforce(const GramMatrix& gram, const Vector& y, double mu, Index coverage) {
  check_same_length(gram, y, "vlts_bruteforce");
  const Index n = gram.size();
  if (coverage < 1 || coverage > n) throw InputError("vlts_bruteforce: coverage must lie in [1, N]");
  const double count = binomial(n, coverage);
  if (count > 1e5)
    throw InputError("vlts_bruteforce: refusing to enumerate " + std::to_string(static_cast<long long>(count)) +
                     " subsamples");
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  std::fill(mask.begin(), mask.begin() + coverage, true);
  SubsetFit best;
  bool have = false;
  do {
    std::vector<Index> retained;
    for (Index i = 0; i < n; ++i)
      if (mask[static_cast<std::size_t>(i)]) retained.push_back(i);
    SubsetFit candidate = subset_ridge_fit(gram, y, mu, retained);
    if (!have || candidate.cost < best.cost) {
      best = std::move(candidate);
      have = true;
    }
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

L0Fit l0_bruteforce(const GramMatrix& gram, const Vector& y, double mu, double lambda0) {
  check_same_length(gram, y, "l0_bruteforce");
  const Index n = gram.size();
  if (n > 16) throw InputError("l0_bruteforce: refusing to enumerate 2^" + std::to_string(n) + " supports");
  L0Fit best;
  bool have = false;
  for (unsigned long mask = 0; mask < (1UL << n); ++mask) {
    std::vector<Index> retained;
    for (Index i = 0; i < n; ++i)
      if (!(mask & (1UL << i))) retained.push_back(i);
    SubsetFit candidate = subset_ridge_fit(gram, y, mu, retained);
    const double cost = candidate.cost + lambda0 * static_cast<double>(n - static_cast<Index>(retained.size()));
    if (!have || cost < best.cost) {
      best.best = std::move(candidate);
      best.cost = cost;
      have = true;
    }
  }
  best.best.fit.objective = best.cost;
  return best;
}

Vector KernelSmoother::holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                                       const std::vector<Index>& test) const {
  if (static_cast<Index>(train.size()) != target.size())
    throw InputError("holdout_predict: target length does not match training set");
  const Matrix ktt = principal_submatrix(gram_.entries, train);
  const Vector beta = spd_factor(ktt + mu * Matrix::Identity(ktt.rows(), ktt.cols())).solve(target);
  Vector out(static_cast<Index>(test.size()));
  for (std::size_t a = 0; a < test.size(); ++a) {
    double v = 0.0;
    for (std::size_t b = 0; b < train.size(); ++b) v += gram_.entries(test[a], train[b]) * beta(static_cast<Index>(b));
    out(static_cast<Index>(a)) = v;
  }
  return out;
}

Vector KernelSmoother::evaluate(const RobustFit& fit, const PointMatrix& queries) const {
  return cross_kernel(gram_.spec, queries, gram_.points) * fit.beta;
}

}  // namespace rnr
