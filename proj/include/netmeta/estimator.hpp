#pragma once

#include "netmeta/kernels.hpp"
#include "netmeta/structure.hpp"

#include <vector>

namespace netmeta {

// Hat matrix of the weighted common-effect fit and the residual projectors
// derived from it. A = (I - H)^T W and B = (I - H)^T R appear throughout the
// moment equations; B is idempotent and A annihilates the design matrix.
struct HatSystem {
  MatrixXd H;              // np x np
  MatrixXd A;              // (I - H)^T W
  MatrixXd B;              // (I - H)^T R
  MatrixXd xtwx_inverse;   // pc x pc, also the common-effect variance

  struct DesignHat {
    // Within-design analogues, built with a pseudoinverse because a single
    // design usually does not identify every basic parameter.
    MatrixXd H_d, A_d, B_d;
  };
  std::vector<DesignHat> per_design;
};

// Throws IdentifiabilityError when X^T W X is singular.
HatSystem build_hat_system(const StructuralMatrices& sm);

// Weighted residual cross products. The global one carries information about
// both covariance components; the per-design ones are free of inconsistency
// because a design-level fit absorbs its own inconsistency shift.
MatrixXd global_q(const StructuralMatrices& sm, const HatSystem& hs);
MatrixXd design_q(const StructuralMatrices& sm, const HatSystem& hs, int d);

// Linear moment equations in vec(Sigma_beta) and vec(Sigma_omega):
//
//   E vec(btr Q)            = c_full vec(Sigma_beta) + d_full vec(Sigma_omega) + e_full
//   E vec(sum_d btr Q_d)    = c_designs vec(Sigma_beta)                        + e_designs
struct EstimatingEquations {
  int p = 0;
  MatrixXd btr_q;                         // p x p
  MatrixXd btr_q_designs;                 // p x p, summed over designs
  std::vector<MatrixXd> btr_q_per_design;
  MatrixXd c_full, d_full;                // p^2 x p^2
  VectorXd e_full;                        // p^2
  MatrixXd c_designs;                     // p^2 x p^2
  VectorXd e_designs;                     // p^2
};

EstimatingEquations assemble_equations(const StructuralMatrices& sm, const HatSystem& hs,
                                       ExecPolicy policy = ExecPolicy::automatic);

enum class ModelKind { full, consistent, common_effect };

// Which moment solution is substituted into the inconsistency equation.
// `truncated` (the default) keeps both reported matrices positive
// semidefinite. `raw` preserves the exact moment identities and is the right
// choice when unbiasedness of the solutions themselves matters.
enum class BetaSubstitution { truncated, raw };

// Source of the between-study covariance under the consistent model:
// estimate it within that model, or carry over the full model's estimate.
enum class BetaSource { consistent_model, full_model };

struct CovarianceEstimates {
  ModelKind model = ModelKind::full;
  BetaSubstitution substitution = BetaSubstitution::truncated;

  MatrixXd sigma_beta_raw;   // linear-equation solutions, not symmetrized
  MatrixXd sigma_omega_raw;
  MatrixXd sigma_beta;       // symmetrized and PSD-truncated
  MatrixXd sigma_omega;
  std::vector<double> clamped_beta;   // negative eigenvalues removed
  std::vector<double> clamped_omega;
};

CovarianceEstimates solve_full_model(const EstimatingEquations& eq,
                                     BetaSubstitution subst = BetaSubstitution::truncated);
CovarianceEstimates solve_consistent_model(const EstimatingEquations& eq,
                                           BetaSource source = BetaSource::consistent_model);
CovarianceEstimates common_effect_covariance(int p);

}  // namespace netmeta
