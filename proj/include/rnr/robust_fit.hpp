#pragma once

#include <memory>
#include <vector>

#include "rnr/kernels.hpp"
#include "rnr/lasso.hpp"
#include "rnr/numlin.hpp"
#include "rnr/types.hpp"

namespace rnr {

/// Joint estimate of the regression function and the sparse outlier vector.
struct RobustFit {
  Vector beta;           // kernel expansion coefficients (or spline coefficients)
  Vector alpha;          // unpenalized null-space coefficients; empty for pure kernels
  Vector outliers;       // o-hat
  Vector fitted_values;  // f-hat(x_i)
  Vector residuals;      // y_i - f-hat(x_i)
  double objective = 0.0;
  double mu = 0.0;
  double lambda = 0.0;
  long iterations = 0;

  std::vector<Index> outlier_support(double threshold = 0.0) const;
};

/// Stacked lasso design for one smoothing level, plus the linear maps that recover the
/// function once the outlier vector is known.
///
/// For compensated data z = y - o the smoother gives fitted values H z and coefficients
/// C z; the inner minimum |z - H z|^2 + mu * pen(f) equals |design * z|^2, where
/// design = [I - H; (mu M)^{1/2}] and pen(f) = z^T M z.
struct DesignOperator {
  Matrix design;             // 2N x N
  double mu = 0.0;
  Matrix hat_matrix;         // H
  Matrix residual_operator;  // I - H, formed without cancellation
  Matrix coefficient_map;    // C; first kernel_coefficients rows give beta, the rest alpha
  Matrix penalty_form;       // M
  Index kernel_coefficients = 0;

  Index size() const { return hat_matrix.rows(); }
};

/// Assembles [I - H; psd_sqrt(mu M)] from smoother ingredients.
DesignOperator make_design_operator(double mu, Matrix hat_matrix, Matrix residual_operator,
                                    Matrix coefficient_map, Matrix penalty_form,
                                    Index kernel_coefficients);

/// Same, with the bottom block (mu M)^{1/2} supplied by a smoother that already knows its spectrum.
DesignOperator make_design_operator(double mu, Matrix hat_matrix, Matrix residual_operator,
                                    Matrix coefficient_map, Matrix penalty_form, Index kernel_coefficients,
                                    Matrix penalty_root);

/// Kernel ridge solver with the factorization of K + mu I cached for repeated right-hand sides.
class KernelRidge {
 public:
  KernelRidge(const GramMatrix& gram, double mu);

  Vector coefficients(const Vector& target) const;
  double mu() const { return mu_; }
  const SpdFactorization<double>& factorization() const { return factor_; }

 private:
  double mu_;
  SpdFactorization<double> factor_;
};

/// beta solving (K + mu I) beta = target.
Vector ridge_step(const GramMatrix& gram, double mu, const Vector& target);

struct AmOptions {
  double tol = 1e-9;
  long max_iter = 5000;
  std::vector<double>* objective_trace = nullptr;
};

/// Alternating minimization: ridge update on outlier-compensated data, then soft-thresholding
/// of the residuals at lambda1 / 2, starting from o = 0. Stops when |o_k - o_{k-1}|_inf <= tol.
RobustFit am_solve(const GramMatrix& gram, const Vector& y, double mu, double lambda1,
                   const AmOptions& options = {});

/// K = V diag(values) V^T with roundoff-negative eigenvalues clamped to zero.
struct KernelSpectrum {
  Matrix vectors;
  Vector values;
};

KernelSpectrum kernel_spectrum(const GramMatrix& gram);

/// Single-lasso design for a pure kernel model: [I - K Gamma; (mu K)^{1/2} Gamma],
/// Gamma = (K + mu I)^{-1}. Every block is a function of K, so all are formed from its spectrum.
DesignOperator build_design(const GramMatrix& gram, double mu);
DesignOperator build_design(const KernelSpectrum& spectrum, double mu);

/// Recovers the function from a given outlier vector and fills residuals and the l1 objective.
RobustFit fit_from_outliers(const DesignOperator& design, const Vector& y, const Vector& outliers,
                            double lambda1);

/// Solves the lasso in o with design X and response X y, then recovers the function.
RobustFit lasso_fit(const DesignOperator& design, const Vector& y, double lambda1,
                    const Vector& init = Vector(), const LassoOptions<double>& options = {});

RobustFit direct_lasso_fit(const GramMatrix& gram, const Vector& y, double mu, double lambda1,
                           const LassoOptions<double>& options = {});

LassoProblem<double> lasso_problem(const DesignOperator& design, const Vector& y);

RobustificationPath<double> robustification_path(const DesignOperator& design, const Vector& y,
                                                 Index g_lambda, double epsilon_ratio,
                                                 const LassoOptions<double>& options = {});

/// |X (y - o)|^2 + lambda0 * sum_i log(|o_i| + delta)
double log_surrogate_objective(const DesignOperator& design, const Vector& y, const Vector& outliers,
                               double lambda0, double delta);

/// Majorization-minimization refinement with weights w_i = 1 / (|o_i| + delta), one weighted
/// lasso solve per iteration. The reported objective is the log-surrogate cost.
RobustFit reweighted_refine(const DesignOperator& design, const Vector& y, double lambda0, double delta,
                            const Vector& init, int iterations = 1,
                            const LassoOptions<double>& options = {},
                            std::vector<double>* objective_trace = nullptr);

/// Scaled Huber loss: u^2 for |u| <= lambda1 / 2, lambda1 |u| - lambda1^2 / 4 beyond.
double huber_rho(double u, double lambda1);

double huber_cost(const Vector& residuals, double lambda1, double mu, double rkhs_norm_sq);

/// |y - f - o|^2 + mu |f|_H^2 + lambda1 |o|_1 for a pure kernel fit.
double l1_objective(const GramMatrix& gram, const Vector& y, const RobustFit& fit, double mu, double lambda1);

struct SubsetFit {
  RobustFit fit;
  std::vector<Index> retained;
  double cost = 0.0;  // sum of retained squared residuals + mu beta^T K_S beta
};

/// Kernel ridge fit on a subsample; the function is evaluated at all N inputs, and excluded
/// points carry their residual in the outlier vector.
SubsetFit subset_ridge_fit(const GramMatrix& gram, const Vector& y, double mu, const std::vector<Index>& retained);

/// Exhaustive variational least-trimmed-squares: best kernel ridge fit over all size-s subsamples.
SubsetFit vlts_bruteforce(const GramMatrix& gram, const Vector& y, double mu, Index coverage);

struct L0Fit {
  SubsetFit best;
  double cost = 0.0;  // includes lambda0 * |support|
};

/// Exhaustive l0-Lagrangian estimator: enumerates every outlier support.
L0Fit l0_bruteforce(const GramMatrix& gram, const Vector& y, double mu, double lambda0);

/// Binomial coefficient as a double (exact for the sizes the brute-force solvers accept).
double binomial(Index n, Index k);

/// A family of linear smoothers indexed by mu. The robust estimators only need the design
/// operator; model selection also needs to refit on subsets and predict elsewhere.
class SmootherFamily {
 public:
  virtual ~SmootherFamily() = default;

  virtual Index size() const = 0;
  virtual DesignOperator design(double mu) const = 0;
  /// Nonrobust fit on the training indices, evaluated at the test indices.
  virtual Vector holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                                 const std::vector<Index>& test) const = 0;
  /// Evaluates a fit produced from this family's design operator at new inputs.
  virtual Vector evaluate(const RobustFit& fit, const PointMatrix& queries) const = 0;
};

class KernelSmoother final : public SmootherFamily {
 public:
  explicit KernelSmoother(GramMatrix gram) : gram_(std::move(gram)), spectrum_(kernel_spectrum(gram_)) {}

  Index size() const override { return gram_.size(); }
  DesignOperator design(double mu) const override { return build_design(spectrum_, mu); }
  Vector holdout_predict(const std::vector<Index>& train, const Vector& target, double mu,
                         const std::vector<Index>& test) const override;
  Vector evaluate(const RobustFit& fit, const PointMatrix& queries) const override;

  const GramMatrix& gram() const { return gram_; }

 private:
  GramMatrix gram_;
  KernelSpectrum spectrum_;
};

}  // namespace rnr
