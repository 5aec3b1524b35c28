#pragma once

#include <Eigen/Core>

#include <string>

namespace dgen {

/// Dense row-major double matrix; the storage type under every tensor.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

inline std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

}  // namespace dgen
