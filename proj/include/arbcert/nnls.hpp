#pragma once

#include <vector>

#include <Eigen/Dense>

namespace arbcert {

// Active-set solve of min 0.5 x'Hx + c'x subject to x >= 0, H symmetric positive definite.
// `passive` (optional, in/out) holds the free set; a good guess skips most pivots.
Eigen::VectorXd nonneg_quadratic(const Eigen::MatrixXd& H, const Eigen::VectorXd& c,
                                 std::vector<char>* passive = nullptr);

}  // namespace arbcert
