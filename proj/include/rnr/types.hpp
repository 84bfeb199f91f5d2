#pragma once

#include <Eigen/Dense>

namespace rnr {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Input points are stored one per row.
using PointMatrix = Eigen::MatrixXd;

}  // namespace rnr
