#pragma once

#include <Eigen/Core>
#include <vector>

namespace csvqa {

// Orthonormal (unitary) 2-D DCT-II over B x B blocks, separable rows then
// columns. Blocks and coefficient arrays are row-major length-B^2 vectors.
std::vector<double> dct2(const std::vector<double>& block, int b);
std::vector<double> idct2(const std::vector<double>& coeffs, int b);

// Materialized basis Psi (n x n, n = B^2) with Psi * vec(x) == vec(dct2(x)).
// Column k of Psi^T is idct2 of the k-th standard coefficient block.
Eigen::MatrixXd materialize_basis(int b);

// Sparsity basis handle for solvers; wraps the materialized matrix.
struct Basis {
  int block_size = 0;
  Eigen::MatrixXd psi;  // n x n, orthonormal

  static Basis make(int b) { return Basis{b, materialize_basis(b)}; }

  Eigen::VectorXd forward(const Eigen::VectorXd& block_vec) const { return psi * block_vec; }
  Eigen::VectorXd inverse(const Eigen::VectorXd& coeff_vec) const {
    return psi.transpose() * coeff_vec;
  }
};

}  // namespace csvqa
