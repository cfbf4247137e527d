#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace softact {

using Vec3 = Eigen::Vector3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec24 = Eigen::Matrix<double, 24, 1>;
using VecX = Eigen::VectorXd;

using Mat3 = Eigen::Matrix3d;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat9x6 = Eigen::Matrix<double, 9, 6>;
using Mat9x24 = Eigen::Matrix<double, 9, 24>;
using Mat24 = Eigen::Matrix<double, 24, 24>;
using Mat24x9 = Eigen::Matrix<double, 24, 9>;
using Mat24x6 = Eigen::Matrix<double, 24, 6>;
using MatX = Eigen::MatrixXd;

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Error taxonomy, mapped to CLI exit codes (2 / 3 / 4).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace softact
