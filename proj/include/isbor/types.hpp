#pragma once

#include <Eigen/Dense>
#include <vector>

namespace isbor {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Feature matrices are stored one sample per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Ordinal labels, always 1..r inside the library.
using Labels = std::vector<int>;

}  // namespace isbor
