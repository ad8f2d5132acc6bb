#pragma once

#include <Eigen/Core>

namespace cdm {

// Batch-major dense storage: one sample per row, one feature per column.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace cdm
