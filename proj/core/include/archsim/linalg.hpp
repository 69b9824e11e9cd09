#pragma once

#include <cstddef>
#include <vector>

namespace archsim::linalg {

using Matrix = std::vector<std::vector<double>>;

Matrix zeros(std::size_t rows, std::size_t cols);

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k pairs with values[k]
};

/// Cyclic Jacobi for symmetric matrices. Rotation order is fixed, so the
/// result is bit-reproducible. Each eigenvector is signed so that its
/// largest-magnitude component (first on ties) is positive.
EigenDecomposition symmetric_eigen(const Matrix& a);

/// max_i |(A v)_i - lambda v_i| for eigenpair k.
double eigen_residual(const Matrix& a, const EigenDecomposition& e, std::size_t k);

}  // namespace archsim::linalg
