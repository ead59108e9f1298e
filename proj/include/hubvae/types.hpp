#pragma once

#include <Eigen/Dense>

namespace hubvae {

// All numerics run in double precision; finite-difference gradient checks
// depend on it.
using Scalar = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Dimension-checked matrix product. Thin wrapper over Eigen's operator*
// that throws instead of asserting on shape mismatch.
Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

bool all_finite(const Eigen::Ref<const Matrix>& m);

}  // namespace hubvae
