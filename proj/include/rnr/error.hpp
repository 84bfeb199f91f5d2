#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace rnr {

/// Malformed or out-of-range caller input (bad dimensions, invalid counts, unparsable files).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a pivot of a Cholesky factorization is not positive.
class NotPositiveDefinite : public NumericalError {
 public:
  NotPositiveDefinite(Eigen::Index pivot, double value)
      : NumericalError("matrix is not positive definite: pivot " + std::to_string(pivot) +
                       " has value " + std::to_string(value)),
        pivot_(pivot) {}

  Eigen::Index pivot() const noexcept { return pivot_; }

 private:
  Eigen::Index pivot_;
};

/// An iterative solver hit its iteration cap. Carries the last iterate for diagnosis.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate, long iterations)
      : NumericalError(what + " (stopped after " + std::to_string(iterations) + " iterations)"),
        reason_(what),
        last_iterate_(std::move(last_iterate)),
        iterations_(iterations) {}

  /// The message without the iteration count.
  const std::string& reason() const noexcept { return reason_; }
  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
  long iterations() const noexcept { return iterations_; }

 private:
  std::string reason_;
  Eigen::VectorXd last_iterate_;
  long iterations_;
};

}  // namespace rnr
