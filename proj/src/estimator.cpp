#include "netmeta/estimator.hpp"

#include "netmeta/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <string>

namespace netmeta {

namespace {

// Inverse of the symmetric PSD normal-equation matrix, with identifiability
// phrasing on failure.
MatrixXd normal_equation_inverse(const MatrixXd& g, const char* context) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(g));
  if (es.info() != Eigen::Success)
    throw NumericalError(std::string(context) + ": eigendecomposition failed");
  const VectorXd& lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  const double lmin = lam.minCoeff();
  if (lmin <= 0.0 || lmax / lmin > kConditionLimit)
    throw IdentifiabilityError(
        std::string(context) +
        ": the weighted normal equations are singular; the network does not "
        "identify every basic parameter");
  return symmetrize(es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose());
}

}  // namespace

HatSystem build_hat_system(const StructuralMatrices& sm) {
  HatSystem hs;
  const int np = sm.n * sm.p;
  const MatrixXd ident = MatrixXd::Identity(np, np);

  MatrixXd g = sm.X.transpose() * sm.W * sm.X;
  hs.xtwx_inverse = normal_equation_inverse(g, "common-effect fit");
  hs.H = sm.X * hs.xtwx_inverse * sm.X.transpose() * sm.W;
  hs.A = (ident - hs.H).transpose() * sm.W;
  hs.B = (ident - hs.H).transpose() * sm.R;

  for (const auto& blk : sm.per_design) {
    HatSystem::DesignHat dh;
    const int len = blk.n_d * sm.p;
    const MatrixXd id_d = MatrixXd::Identity(len, len);
    MatrixXd gd = blk.X_d.transpose() * blk.W_d * blk.X_d;
    dh.H_d = blk.X_d * pseudo_inverse(gd) * blk.X_d.transpose() * blk.W_d;
    dh.A_d = (id_d - dh.H_d).transpose() * blk.W_d;
    dh.B_d = (id_d - dh.H_d).transpose() * blk.R_d;
    hs.per_design.push_back(std::move(dh));
  }
  return hs;
}

MatrixXd global_q(const StructuralMatrices& sm, const HatSystem& hs) {
  const VectorXd resid = sm.Y - hs.H * sm.Y;
  return (sm.W * resid) * (sm.R * resid).transpose();
}

MatrixXd design_q(const StructuralMatrices& sm, const HatSystem& hs, int d) {
  const auto& blk = sm.per_design.at(d);
  const auto& dh = hs.per_design.at(d);
  const VectorXd resid = blk.Y_d - dh.H_d * blk.Y_d;
  return (blk.W_d * resid) * (blk.R_d * resid).transpose();
}

EstimatingEquations assemble_equations(const StructuralMatrices& sm, const HatSystem& hs,
                                       ExecPolicy policy) {
  EstimatingEquations eq;
  eq.p = sm.p;
  const int p2 = sm.p * sm.p;

  const BlockedMatrix a(hs.A, sm.p);
  const BlockedMatrix b(hs.B, sm.p);
  eq.btr_q = block_trace(BlockedMatrix(global_q(sm, hs), sm.p));
  eq.c_full = moment_coefficient(a, sm.M1, b, policy);
  eq.d_full = moment_coefficient(a, sm.M2, b, policy);
  eq.e_full = vec(block_trace(b));

  eq.btr_q_designs = MatrixXd::Zero(sm.p, sm.p);
  eq.c_designs = MatrixXd::Zero(p2, p2);
  eq.e_designs = VectorXd::Zero(p2);
  for (size_t d = 0; d < sm.per_design.size(); ++d) {
    const auto& dh = hs.per_design[d];
    const BlockedMatrix ad(dh.A_d, sm.p);
    const BlockedMatrix bd(dh.B_d, sm.p);
    MatrixXd btr_qd = block_trace(BlockedMatrix(design_q(sm, hs, static_cast<int>(d)), sm.p));
    eq.btr_q_designs += btr_qd;
    eq.btr_q_per_design.push_back(std::move(btr_qd));
    eq.c_designs += moment_coefficient(ad, sm.per_design[d].M1_d, bd, policy);
    eq.e_designs += vec(block_trace(bd));
  }
  return eq;
}

namespace {

VectorXd solve_moment_system(const MatrixXd& coeff, const VectorXd& rhs, const char* what) {
  Eigen::JacobiSVD<MatrixXd> svd(coeff, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double smin = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
  if (smin <= 0.0 || smax / smin > kConditionLimit)
    throw IdentifiabilityError(std::string(what) +
                               " (condition number " +
                               std::to_string(smin > 0.0 ? smax / smin : 0.0) +
                               " exceeds 1e12); a simpler model may be needed");
  return Eigen::FullPivLU<MatrixXd>(coeff).solve(rhs);
}

MatrixXd finalize(const MatrixXd& raw, std::vector<double>& clamped) {
  TruncationResult tr = truncate_psd(symmetrize(raw));
  clamped = tr.clamped;
  return tr.matrix;
}

}  // namespace

CovarianceEstimates solve_full_model(const EstimatingEquations& eq, BetaSubstitution subst) {
  CovarianceEstimates out;
  out.model = ModelKind::full;
  out.substitution = subst;
  const int p = eq.p;

  VectorXd beta_vec =
      solve_moment_system(eq.c_designs, vec(eq.btr_q_designs) - eq.e_designs,
                          "the between-study covariance is not identified by the "
                          "design-level equations; every pair of outcomes needs a design "
                          "with two or more studies reporting both");
  out.sigma_beta_raw = unvec(beta_vec, p, p);
  out.sigma_beta = finalize(out.sigma_beta_raw, out.clamped_beta);

  const MatrixXd& beta_subst =
      subst == BetaSubstitution::truncated ? out.sigma_beta : out.sigma_beta_raw;
  VectorXd omega_rhs = vec(eq.btr_q) - eq.c_full * vec(beta_subst) - eq.e_full;
  VectorXd omega_vec =
      solve_moment_system(eq.d_full, omega_rhs,
                          "the inconsistency covariance is not identified; every pair of "
                          "outcomes needs studies from two or more designs");
  out.sigma_omega_raw = unvec(omega_vec, p, p);
  out.sigma_omega = finalize(out.sigma_omega_raw, out.clamped_omega);
  return out;
}

CovarianceEstimates solve_consistent_model(const EstimatingEquations& eq, BetaSource source) {
  CovarianceEstimates out;
  out.model = ModelKind::consistent;
  const int p = eq.p;

  VectorXd beta_vec;
  if (source == BetaSource::consistent_model) {
    beta_vec = solve_moment_system(eq.c_full, vec(eq.btr_q) - eq.e_full,
                                   "the between-study covariance is not identified");
  } else {
    beta_vec = solve_moment_system(eq.c_designs, vec(eq.btr_q_designs) - eq.e_designs,
                                   "the between-study covariance is not identified by the "
                                   "design-level equations; every pair of outcomes needs a "
                                   "design with two or more studies reporting both");
  }
  out.sigma_beta_raw = unvec(beta_vec, p, p);
  out.sigma_beta = finalize(out.sigma_beta_raw, out.clamped_beta);
  out.sigma_omega_raw = MatrixXd::Zero(p, p);
  out.sigma_omega = MatrixXd::Zero(p, p);
  return out;
}

CovarianceEstimates common_effect_covariance(int p) {
  CovarianceEstimates out;
  out.model = ModelKind::common_effect;
  out.sigma_beta_raw = MatrixXd::Zero(p, p);
  out.sigma_omega_raw = MatrixXd::Zero(p, p);
  out.sigma_beta = MatrixXd::Zero(p, p);
  out.sigma_omega = MatrixXd::Zero(p, p);
  return out;
}

}  // namespace netmeta
