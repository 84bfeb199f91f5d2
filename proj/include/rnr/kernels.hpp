#pragma once

#include <string>

#include "rnr/types.hpp"

namespace rnr {

enum class KernelFamily { gaussian, linear, thin_plate_radial };

/// Kernel family plus its hyperparameters. Construct through the named factories so the
/// invariants (positive width, dimension 2 for thin-plate) are checked once.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double width = 1.0;  // eta, gaussian only
  Index dimension = 1;

  static KernelSpec gaussian(double width, Index dimension = 1);
  static KernelSpec linear(Index dimension);
  static KernelSpec thin_plate();

  void validate() const;
};

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Symmetric kernel matrix over a fixed point set.
struct GramMatrix {
  Matrix entries;
  KernelSpec spec;
  PointMatrix points;

  Index size() const { return entries.rows(); }
};

/// gaussian: exp(-|x-y|^2 / (2 eta^2)); linear: x.y; thin-plate: r^2 log r, 0 at r = 0.
double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y);

GramMatrix gram_matrix(const KernelSpec& spec, const PointMatrix& points);

/// Rows are query points, columns are the centers: out(i, j) = K(queries_i, centers_j).
Matrix cross_kernel(const KernelSpec& spec, const PointMatrix& queries, const PointMatrix& centers);

}  // namespace rnr
