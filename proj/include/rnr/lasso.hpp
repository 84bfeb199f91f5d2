#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "rnr/error.hpp"

namespace rnr {

/// S(z, gamma) = sign(z) (|z| - gamma)_+
template <typename Scalar>
Scalar soft_threshold(Scalar z, Scalar gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return Scalar(0);
}

/// min_o |response - design o|^2 + lambda * sum_i weights_i |o_i|
template <typename Scalar>
struct LassoProblem {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MatrixType design;
  VectorType response;
  VectorType weights;

  LassoProblem(MatrixType design_, VectorType response_)
      : design(std::move(design_)), response(std::move(response_)),
        weights(VectorType::Ones(design.cols())) {
    validate();
  }

  LassoProblem(MatrixType design_, VectorType response_, VectorType weights_)
      : design(std::move(design_)), response(std::move(response_)), weights(std::move(weights_)) {
    validate();
  }

  Eigen::Index rows() const { return design.rows(); }
  Eigen::Index cols() const { return design.cols(); }

  void validate() const {
    if (design.rows() < 1 || design.cols() < 1) throw InputError("lasso: empty design matrix");
    if (response.size() != design.rows())
      throw InputError("lasso: response length " + std::to_string(response.size()) +
                       " does not match design rows " + std::to_string(design.rows()));
    if (weights.size() != design.cols())
      throw InputError("lasso: weight count does not match design columns");
    if ((weights.array() < Scalar(0)).any() || !weights.allFinite())
      throw InputError("lasso: weights must be finite and nonnegative");
  }
};

template <typename Scalar>
struct LassoOptions {
  Scalar tol = Scalar(1e-8);
  long max_iter = 10000;
  /// Once a sweep leaves the signed support unchanged, jump to the exact minimizer of the
  /// quadratic restricted to that support when it keeps the same signs.
  bool active_set_polish = true;
  /// When set, receives the objective after every sweep (and after each polish step).
  std::vector<Scalar>* objective_trace = nullptr;
};

/// Samples of the lasso solution over a decreasing lambda grid for one smoothing level.
template <typename Scalar>
struct RobustificationPath {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar mu = Scalar(0);
  VectorType lambda_grid;
  MatrixType solutions;  // one row per lambda
  std::vector<std::vector<Eigen::Index>> supports;

  Eigen::Index size() const { return lambda_grid.size(); }
};

/// Logarithmically spaced grid from hi down to hi * ratio, both endpoints included.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_grid_decreasing(Scalar hi, Scalar ratio, Eigen::Index count) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grid(count);
  const Scalar log_ratio = std::log(ratio);
  for (Eigen::Index k = 0; k < count; ++k)
    grid(k) = hi * std::exp(log_ratio * Scalar(k) / Scalar(count - 1));
  grid(0) = hi;
  return grid;
}

/// Cyclic coordinate descent in covariance form.
///
/// The normal matrix Q = X^T X and the correlations c = X^T b are formed once per problem, so
/// a coordinate whose value stays at zero costs O(1) and a changing one costs O(N). Solves for
/// different lambdas or weights reuse the same precomputation.
template <typename Scalar>
class LassoSolver {
 public:
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit LassoSolver(const LassoProblem<Scalar>& problem)
      : weights_(problem.weights),
        response_sq_(problem.response.squaredNorm()) {
    normal_.noalias() = problem.design.transpose() * problem.design;
    correlation_.noalias() = problem.design.transpose() * problem.response;
  }

  Eigen::Index size() const { return correlation_.size(); }
  const MatrixType& normal_matrix() const { return normal_; }
  const VectorType& correlation() const { return correlation_; }
  const VectorType& weights() const { return weights_; }

  /// 2 max_i |x_i^T b| / w_i: the smallest lambda whose solution is all zero.
  Scalar lambda_max() const { return lambda_max(weights_); }

  Scalar lambda_max(const VectorType& weights) const {
    if ((weights.array() <= Scalar(0)).any())
      throw InputError("lambda_max: weights must be strictly positive");
    return Scalar(2) * (correlation_.array().abs() / weights.array()).maxCoeff();
  }

  Scalar objective(const VectorType& o, Scalar lambda) const { return objective(o, lambda, weights_); }

  Scalar objective(const VectorType& o, Scalar lambda, const VectorType& weights) const {
    return response_sq_ - Scalar(2) * correlation_.dot(o) + o.dot(normal_ * o) +
           lambda * weights.cwiseProduct(o.cwiseAbs()).sum();
  }

  VectorType solve(Scalar lambda, const VectorType& init, const LassoOptions<Scalar>& options = {}) const {
    return solve(lambda, init, weights_, options);
  }

  VectorType solve(Scalar lambda, const VectorType& init, const VectorType& weights,
                   const LassoOptions<Scalar>& options = {}) const {
    const Eigen::Index n = size();
    if (!(lambda >= Scalar(0))) throw InputError("lasso solve: lambda must be nonnegative");
    if (!(options.tol > Scalar(0))) throw InputError("lasso solve: tol must be positive");
    if (init.size() != n) throw InputError("lasso solve: initial point has wrong length");
    if (weights.size() != n || (weights.array() < Scalar(0)).any())
      throw InputError("lasso solve: weights must be nonnegative, one per coordinate");

    if ((weights.array() > Scalar(0)).all() && lambda >= lambda_max(weights)) {
      if (options.objective_trace) options.objective_trace->push_back(response_sq_);
      return VectorType::Zero(n);
    }

    VectorType o = init;
    VectorType grad = correlation_ - normal_ * o;  // X^T (b - X o)
    const VectorType thresholds = (lambda / Scalar(2)) * weights;

    std::vector<signed char> pattern(static_cast<std::size_t>(n), 0);
    std::vector<signed char> previous(static_cast<std::size_t>(n), 2);
    bool polish_failed_for_pattern = false;

    for (long sweep = 1; sweep <= options.max_iter; ++sweep) {
      Scalar max_change = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar qii = normal_(i, i);
        const Scalar old = o(i);
        Scalar updated = Scalar(0);
        if (qii > Scalar(0)) updated = soft_threshold(grad(i) + qii * old, thresholds(i)) / qii;
        const Scalar delta = updated - old;
        if (delta != Scalar(0)) {
          grad.noalias() -= normal_.col(i) * delta;
          o(i) = updated;
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      if (options.objective_trace) options.objective_trace->push_back(objective_from_grad(o, grad, lambda, weights));
      if (max_change <= options.tol) return o;

      if (!options.active_set_polish) continue;
      for (Eigen::Index i = 0; i < n; ++i)
        pattern[static_cast<std::size_t>(i)] = static_cast<signed char>((o(i) > 0) - (o(i) < 0));
      if (pattern != previous) {
        previous = pattern;
        polish_failed_for_pattern = false;
        continue;
      }
      if (!polish_failed_for_pattern) {
        polish_failed_for_pattern = !polish(o, grad, pattern, lambda, weights);
        if (!polish_failed_for_pattern && options.objective_trace)
          options.objective_trace->push_back(objective_from_grad(o, grad, lambda, weights));
      }
    }
    throw ConvergenceError("lasso coordinate descent did not converge at lambda " + std::to_string(static_cast<double>(lambda)),
                           o.template cast<double>(), options.max_iter);
  }

  RobustificationPath<Scalar> path(Eigen::Index g_lambda, Scalar epsilon_ratio,
                                   const LassoOptions<Scalar>& options = {}) const {
    if (g_lambda < 2) throw InputError("lasso path: need at least 2 grid points");
    if (!(epsilon_ratio > Scalar(0) && epsilon_ratio < Scalar(1)))
      throw InputError("lasso path: epsilon ratio must lie in (0, 1)");
    const Scalar top = lambda_max();
    if (!(top > Scalar(0)))
      throw InputError("lasso path: lambda_max is zero, the response is fit exactly without outliers");

    RobustificationPath<Scalar> out;
    out.lambda_grid = log_grid_decreasing(top, epsilon_ratio, g_lambda);
    out.solutions.resize(g_lambda, size());
    out.supports.resize(static_cast<std::size_t>(g_lambda));
    VectorType current = VectorType::Zero(size());
    for (Eigen::Index k = 0; k < g_lambda; ++k) {
      try {
        current = solve(out.lambda_grid(k), current, options);
      } catch (const ConvergenceError& e) {
        throw ConvergenceError("lasso path failed at lambda index " + std::to_string(k) + ": " + e.reason(),
                               e.last_iterate(), e.iterations());
      }
      out.solutions.row(k) = current.transpose();
      auto& support = out.supports[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < size(); ++i)
        if (current(i) != Scalar(0)) support.push_back(i);
    }
    return out;
  }

 private:
  Scalar objective_from_grad(const VectorType& o, const VectorType& grad, Scalar lambda,
                             const VectorType& weights) const {
    // o^T Q o = o^T (c - grad)
    return response_sq_ - correlation_.dot(o) - o.dot(grad) +
           lambda * weights.cwiseProduct(o.cwiseAbs()).sum();
  }

  // Feature-sign steps: minimize the quadratic restricted to the current sign pattern, then take
  // the best of the zero crossings on the way there (the objective is convex along the segment).
  // Repeats on the new pattern until the restricted minimizer keeps its signs.
  bool polish(VectorType& o, VectorType& grad, std::vector<signed char> pattern, Scalar lambda,
              const VectorType& weights) const {
    constexpr int max_rounds = 25;
    bool moved = false;
    Scalar current = objective_from_grad(o, grad, lambda, weights);
    for (int round = 0; round < max_rounds; ++round) {
      std::vector<Eigen::Index> active;
      for (std::size_t i = 0; i < pattern.size(); ++i)
        if (pattern[i] != 0) active.push_back(static_cast<Eigen::Index>(i));
      if (active.empty()) break;
      const auto m = static_cast<Eigen::Index>(active.size());
      MatrixType q_aa(m, m);
      VectorType rhs(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::Index i = active[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < m; ++b) q_aa(a, b) = normal_(i, active[static_cast<std::size_t>(b)]);
        rhs(a) = correlation_(i) - lambda / Scalar(2) * weights(i) * Scalar(pattern[static_cast<std::size_t>(i)]);
      }
      Eigen::LLT<MatrixType> llt(q_aa);
      if (llt.info() != Eigen::Success) {
        // singular restricted block (e.g. a design with a null space): a tiny shift picks one
        // minimizer; the sweeps that follow still enforce the convergence test
        q_aa.diagonal().array() += Scalar(1e-12) * q_aa.diagonal().maxCoeff();
        llt.compute(q_aa);
        if (llt.info() != Eigen::Success) break;
      }
      const VectorType z = llt.solve(rhs);
      if (!z.allFinite()) break;

      std::vector<std::pair<Scalar, Eigen::Index>> steps{{Scalar(1), -1}};
      for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::Index i = active[static_cast<std::size_t>(a)];
        const signed char sign = pattern[static_cast<std::size_t>(i)];
        if ((sign > 0 && z(a) <= 0) || (sign < 0 && z(a) >= 0)) steps.emplace_back(o(i) / (o(i) - z(a)), a);
      }
      const bool consistent = steps.size() == 1;
      VectorType best_point, best_grad;
      Scalar best = current;
      bool full_step = false;
      for (const auto& [t, crossing] : steps) {
        if (!(t > Scalar(0))) continue;
        VectorType point = o;
        for (Eigen::Index a = 0; a < m; ++a) {
          const Eigen::Index i = active[static_cast<std::size_t>(a)];
          point(i) = o(i) + t * (z(a) - o(i));
        }
        if (crossing >= 0) point(active[static_cast<std::size_t>(crossing)]) = Scalar(0);
        VectorType point_grad = grad;
        for (Eigen::Index a = 0; a < m; ++a) {
          const Eigen::Index i = active[static_cast<std::size_t>(a)];
          const Scalar delta = point(i) - o(i);
          if (delta != Scalar(0)) point_grad.noalias() -= normal_.col(i) * delta;
        }
        const Scalar value = objective_from_grad(point, point_grad, lambda, weights);
        if (value < best) {
          best = value;
          best_point = std::move(point);
          best_grad = std::move(point_grad);
          full_step = crossing < 0;
        }
      }
      if (best_point.size() == 0) break;
      o = std::move(best_point);
      grad = std::move(best_grad);
      current = best;
      moved = true;
      if (consistent && full_step) break;
      for (Eigen::Index i = 0; i < o.size(); ++i)
        pattern[static_cast<std::size_t>(i)] = static_cast<signed char>((o(i) > 0) - (o(i) < 0));
    }
    return moved;
  }

  MatrixType normal_;
  VectorType correlation_;
  VectorType weights_;
  Scalar response_sq_;
};

template <typename Scalar>
Scalar lambda_max(const LassoProblem<Scalar>& problem) {
  return LassoSolver<Scalar>(problem).lambda_max();
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> solve(const LassoProblem<Scalar>& problem, std::type_identity_t<Scalar> lambda,
                                               const typename LassoProblem<Scalar>::VectorType& init,
                                               const LassoOptions<Scalar>& options = {}) {
  return LassoSolver<Scalar>(problem).solve(lambda, init, options);
}

template <typename Scalar>
RobustificationPath<Scalar> path(const LassoProblem<Scalar>& problem, Eigen::Index g_lambda,
                                 std::type_identity_t<Scalar> epsilon_ratio,
                                 const LassoOptions<Scalar>& options = {}) {
  return LassoSolver<Scalar>(problem).path(g_lambda, epsilon_ratio, options);
}

}  // namespace rnr
