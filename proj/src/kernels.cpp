#include "rnr/kernels.hpp"

#include <cmath>

#include "rnr/error.hpp"

namespace rnr {

namespace {

double radial_thin_plate(double r_sq) {
  if (r_sq == 0.0) return 0.0;
  // r^2 log r = r^2 * log(r^2) / 2
  return 0.5 * r_sq * std::log(r_sq);
}

double eval_unchecked(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& y) {
  switch (spec.family) {
    case KernelFamily::gaussian:
      return std::exp(-(x - y).squaredNorm() / (2.0 * spec.width * spec.width));
    case KernelFamily::linear:
      return x.dot(y);
    case KernelFamily::thin_plate_radial:
      return radial_thin_plate((x - y).squaredNorm());
  }
  return 0.0;
}

}  // namespace

KernelSpec KernelSpec::gaussian(double width, Index dimension) {
  KernelSpec spec{KernelFamily::gaussian, width, dimension};
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::linear(Index dimension) {
  KernelSpec spec{KernelFamily::linear, 1.0, dimension};
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::thin_plate() { return KernelSpec{KernelFamily::thin_plate_radial, 1.0, 2}; }

void KernelSpec::validate() const {
  if (dimension < 1) throw InputError("kernel dimension must be positive");
  if (family == KernelFamily::gaussian && !(width > 0.0))
    throw InputError("gaussian kernel width must be positive");
  if (family == KernelFamily::thin_plate_radial && dimension != 2)
    throw InputError("thin-plate radial kernel requires dimension 2");
}

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::gaussian:
      return "gaussian";
    case KernelFamily::linear:
      return "linear";
    case KernelFamily::thin_plate_radial:
      return "thin-plate";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "linear") return KernelFamily::linear;
  if (name == "thin-plate" || name == "thin_plate" || name == "thin_plate_radial")
    return KernelFamily::thin_plate_radial;
  throw InputError("unknown kernel family '" + name + "'");
}

double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y) {
  spec.validate();
  if (x.size() != spec.dimension || y.size() != spec.dimension)
    throw InputError("kernel argument dimension does not match kernel dimension " +
                     std::to_string(spec.dimension));
  return eval_unchecked(spec, x, y);
}

GramMatrix gram_matrix(const KernelSpec& spec, const PointMatrix& points) {
  spec.validate();
  if (points.rows() == 0) throw InputError("gram_matrix: empty point list");
  if (points.cols() != spec.dimension)
    throw InputError("gram_matrix: points have dimension " + std::to_string(points.cols()) +
                     ", kernel expects " + std::to_string(spec.dimension));
  const Index n = points.rows();
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      const double v = eval_unchecked(spec, points.row(i).transpose(), points.row(j).transpose());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return GramMatrix{std::move(k), spec, points};
}

Matrix cross_kernel(const KernelSpec& spec, const PointMatrix& queries, const PointMatrix& centers) {
  spec.validate();
  if (queries.cols() != spec.dimension || centers.cols() != spec.dimension)
    throw InputError("cross_kernel: point dimension does not match kernel dimension");
  Matrix out(queries.rows(), centers.rows());
  for (Index j = 0; j < centers.rows(); ++j)
    for (Index i = 0; i < queries.rows(); ++i)
      out(i, j) = eval_unchecked(spec, queries.row(i).transpose(), centers.row(j).transpose());
  return out;
}

}  // namespace rnr
