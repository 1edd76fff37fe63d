#pragma once

#include <Eigen/Core>

namespace fc2t2 {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

// One point per row. Row-major so a point is contiguous.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
// One sample per row, one channel per column.
using Values = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace fc2t2
