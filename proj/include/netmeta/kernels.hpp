#pragma once

#include <Eigen/Dense>

#include <vector>

namespace netmeta {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Threshold above which a condition number is treated as "numerically singular"
// everywhere in the library. Failures are reported, never silently regularized.
inline constexpr double kConditionLimit = 1e12;

// Square (n*p) x (n*p) matrix addressed as an n x n grid of p x p blocks.
// Row block k, column block i is entries.block(k*p, i*p, p, p).
struct BlockedMatrix {
  MatrixXd entries;
  int block_size = 1;

  BlockedMatrix() = default;
  BlockedMatrix(MatrixXd m, int p);

  int block_count() const { return static_cast<int>(entries.rows()) / block_size; }

  Eigen::Block<const MatrixXd> block(int i, int j) const {
    return entries.block(i * block_size, j * block_size, block_size, block_size);
  }
};

// Sum of the diagonal p x p blocks. Reduces to the ordinary trace when p = 1.
MatrixXd block_trace(const BlockedMatrix& m);

// Block trace of A (M (x) Sigma) B computed as sum_{i,j,k} m_ij A_{k,i} Sigma B_{j,k},
// without forming the (n*p)^2 Kronecker product. A and B are blocked by p = sigma.rows(),
// M is n x n with n = block count.
MatrixXd btr_sandwich(const BlockedMatrix& a, const MatrixXd& m, const MatrixXd& sigma,
                      const BlockedMatrix& b);

// Column-major stacking and its inverse.
VectorXd vec(const MatrixXd& m);
MatrixXd unvec(const VectorXd& v, int rows, int cols);

MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

// Moore-Penrose pseudoinverse via SVD. Singular values below 1e-10 * s_max
// are treated as exact zeros.
MatrixXd pseudo_inverse(const MatrixXd& m);

MatrixXd symmetrize(const MatrixXd& m);

struct TruncationResult {
  MatrixXd matrix;
  // Eigenvalues at or below -1e-12 that were clamped to zero. Values in
  // (-1e-12, 0) are zeroed silently as decomposition noise.
  std::vector<double> clamped;
  double min_eigenvalue = 0.0;
};

// Projection onto the positive semidefinite cone: negative eigenvalues are set
// to zero, eigenvectors kept. Input must already be symmetric.
TruncationResult truncate_psd(const MatrixXd& m);

enum class ExecPolicy { serial, parallel, automatic };

// Coefficient of vec(Sigma) in vec(btr_sandwich(A, M, Sigma, B)):
//
//   sum_{i,j,k} m_ij  B_{j,k}^T (x) A_{k,i}        (p^2 x p^2)
//
// This is the hot kernel of the estimating equations. The parallel path and
// the serial reference compute the same sum; they differ only in the order of
// floating point accumulation, which is deterministic for a fixed thread count.
MatrixXd moment_coefficient(const BlockedMatrix& a, const MatrixXd& m, const BlockedMatrix& b,
                            ExecPolicy policy = ExecPolicy::automatic);
MatrixXd moment_coefficient_serial(const BlockedMatrix& a, const MatrixXd& m,
                                   const BlockedMatrix& b);

bool openmp_enabled();

// Inverse of a symmetric positive definite matrix with a condition check.
// Throws NumericalError when lambda_max / lambda_min exceeds kConditionLimit
// or the matrix is not positive definite; `what` names the matrix in messages.
MatrixXd spd_inverse(const MatrixXd& m, const char* what);

}  // namespace netmeta
