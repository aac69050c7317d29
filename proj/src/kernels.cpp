#include "netmeta/kernels.hpp"

#include "netmeta/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace netmeta {

BlockedMatrix::BlockedMatrix(MatrixXd m, int p) : entries(std::move(m)), block_size(p) {
  if (block_size <= 0) throw std::invalid_argument("block size must be positive");
  if (entries.rows() != entries.cols())
    throw std::invalid_argument("blocked matrix must be square");
  if (entries.rows() % block_size != 0)
    throw std::invalid_argument("matrix size is not a multiple of the block size");
}

MatrixXd block_trace(const BlockedMatrix& m) {
  const int p = m.block_size;
  MatrixXd out = MatrixXd::Zero(p, p);
  for (int i = 0; i < m.block_count(); ++i) out += m.block(i, i);
  return out;
}

namespace {

void check_sandwich_dims(const BlockedMatrix& a, const MatrixXd& m, int p,
                         const BlockedMatrix& b) {
  if (a.block_size != p || b.block_size != p)
    throw std::invalid_argument("block size does not match Sigma dimension");
  const int n = a.block_count();
  if (b.block_count() != n || m.rows() != n || m.cols() != n)
    throw std::invalid_argument("btr_sandwich: dimension mismatch");
}

}  // namespace

MatrixXd btr_sandwich(const BlockedMatrix& a, const MatrixXd& m, const MatrixXd& sigma,
                      const BlockedMatrix& b) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("Sigma must be square");
  const int p = static_cast<int>(sigma.rows());
  check_sandwich_dims(a, m, p, b);
  const int n = a.block_count();

  MatrixXd out = MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double mij = m(i, j);
      if (mij == 0.0) continue;
      for (int k = 0; k < n; ++k) {
        out.noalias() += mij * (a.block(k, i) * sigma * b.block(j, k));
      }
    }
  }
  return out;
}

VectorXd vec(const MatrixXd& m) {
  return Eigen::Map<const VectorXd>(m.data(), m.size());
}

MatrixXd unvec(const VectorXd& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("unvec: length does not match requested shape");
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

MatrixXd pseudo_inverse(const MatrixXd& m) {
  if (m.size() == 0) return m;
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 0.0);
  VectorXd inv = VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

MatrixXd symmetrize(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetrize: matrix must be square");
  return 0.5 * (m + m.transpose());
}

TruncationResult truncate_psd(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("truncate_psd: matrix must be square");
  if (!m.allFinite()) throw std::invalid_argument("truncate_psd: non-finite input");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("truncate_psd: input is not symmetric");

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw std::invalid_argument("truncate_psd: eigendecomposition failed");

  TruncationResult res;
  VectorXd lam = es.eigenvalues();
  res.min_eigenvalue = lam.minCoeff();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < 0.0) {
      if (lam(i) <= -1e-12) res.clamped.push_back(lam(i));
      lam(i) = 0.0;
    }
  }
  res.matrix = symmetrize(es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose());
  return res;
}

// ---------------------------------------------------------------------------
// Estimating-equation coefficient kernel
// ---------------------------------------------------------------------------

namespace {

struct NonZero {
  int i;
  int j;
  double value;
};

std::vector<NonZero> nonzeros(const MatrixXd& m) {
  std::vector<NonZero> nz;
  nz.reserve(static_cast<size_t>(m.size()) / 4);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) nz.push_back({static_cast<int>(i), static_cast<int>(j), m(i, j)});
  return nz;
}

// One (i, j) term of the sum: sum_k B_{j,k}^T (x) A_{k,i}.
MatrixXd pair_term(const BlockedMatrix& a, const BlockedMatrix& b, int i, int j) {
  const int p = a.block_size;
  const int n = a.block_count();
  MatrixXd term = MatrixXd::Zero(p * p, p * p);
  MatrixXd bt(p, p);
  for (int k = 0; k < n; ++k) {
    bt = b.block(j, k).transpose();
    const auto ablk = a.block(k, i);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c)
        term.block(r * p, c * p, p, p) += bt(r, c) * ablk;
  }
  return term;
}

}  // namespace

MatrixXd moment_coefficient_serial(const BlockedMatrix& a, const MatrixXd& m,
                                   const BlockedMatrix& b) {
  check_sandwich_dims(a, m, a.block_size, b);
  const int p = a.block_size;
  MatrixXd out = MatrixXd::Zero(p * p, p * p);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0)
        out += m(i, j) * pair_term(a, b, static_cast<int>(i), static_cast<int>(j));
  return out;
}

MatrixXd moment_coefficient(const BlockedMatrix& a, const MatrixXd& m, const BlockedMatrix& b,
                            ExecPolicy policy) {
  check_sandwich_dims(a, m, a.block_size, b);
#ifdef _OPENMP
  const bool big_enough = a.block_count() >= 24;
  const bool go_parallel =
      policy == ExecPolicy::parallel || (policy == ExecPolicy::automatic && big_enough);
  if (go_parallel && omp_get_max_threads() > 1) {
    const int p = a.block_size;
    const auto nz = nonzeros(m);
    const int nthreads = omp_get_max_threads();
    std::vector<MatrixXd> partial(nthreads, MatrixXd::Zero(p * p, p * p));
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < static_cast<long>(nz.size()); ++idx) {
      const auto& e = nz[idx];
      partial[omp_get_thread_num()] += e.value * pair_term(a, b, e.i, e.j);
    }
    MatrixXd out = MatrixXd::Zero(p * p, p * p);
    // Reduce in thread-id order so the result is reproducible for a fixed
    // thread count.
    for (const auto& part : partial) out += part;
    return out;
  }
#else
  (void)policy;
#endif
  return moment_coefficient_serial(a, m, b);
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

MatrixXd spd_inverse(const MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  if (es.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": eigendecomposition failed");
  const VectorXd& lam = es.eigenvalues();
  const double lmin = lam.minCoeff();
  const double lmax = lam.maxCoeff();
  if (lmin <= 0.0 || lmax / lmin > kConditionLimit) {
    throw NumericalError(std::string(what) + ": matrix is singular or ill-conditioned " +
                         "(condition number " +
                         std::to_string(lmin > 0.0 ? lmax / lmin : std::nan("")) + ")");
  }
  return symmetrize(es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose());
}

}  // namespace netmeta
