#pragma once

#include <Eigen/Dense>

namespace hoctl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace hoctl
