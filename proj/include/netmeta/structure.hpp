#pragma once

#include "netmeta/types.hpp"

#include <string>
#include <vector>

namespace netmeta {

// Contrast correlation matrix of a design with c_d contrasts: ones on the
// diagonal, one half off it. This is the covariance pattern that a common
// heterogeneity (or inconsistency) variance induces across contrasts sharing
// a baseline arm.
MatrixXd build_p_matrix(int contrast_count);

// Rows of the design-to-basic-parameter map for one design: one row per
// contrast, over the network's basic parameters (effects of each
// non-reference treatment against the reference). A contrast J vs A (A the
// network reference) has a single +1; J vs K carries +1 for J and -1 for K.
MatrixXd build_contrast_rows(const Design& design,
                             const std::vector<std::string>& network_treatments);

// Between-study (M1) and inconsistency (M2) structure over all n contrast
// rows. M1 couples contrasts within a study (1 diagonal, 1/2 within study,
// 0 across studies). M2 couples contrasts within a design (1 for the same
// comparison, 1/2 for different comparisons, 0 across designs).
std::pair<MatrixXd, MatrixXd> build_m_matrices(const NetworkDataset& ds);

// Precision of a block-diagonal within-study covariance under missing data:
// per block, the observed submatrix is inverted and embedded at its original
// positions; rows and columns of missing components are zero. With nothing
// missing this is the ordinary blockwise inverse. block_sizes partitions S;
// pass a single block to treat S whole.
MatrixXd build_precision_matrix(const MatrixXd& s, const std::vector<bool>& observed,
                                const std::vector<int>& block_sizes,
                                const char* what = "within-study covariance");

struct BuildOptions {
  // Value written into Y at missing positions. Results must not depend on it;
  // tests re-run with a nonzero placeholder and compare.
  double missing_placeholder = 0.0;
};

// Everything the estimator consumes, assembled once from a canonical dataset.
struct StructuralMatrices {
  int n = 0;  // total contrast rows
  int p = 0;  // outcomes
  int c = 0;  // basic parameters per outcome

  VectorXd Y;    // np, outcome runs fastest within a contrast
  MatrixXd S;    // np x np block-diagonal within-study covariance
  MatrixXd R;    // np x np diagonal 0/1 observedness
  MatrixXd W;    // np x np precision with missing rows/columns zeroed
  MatrixXd M1;   // n x n
  MatrixXd M2;   // n x n
  MatrixXd Z;    // n x c
  MatrixXd X;    // np x pc, row block i equals I_p (x) Z_i

  struct DesignBlock {
    int design = 0;          // index into ds.designs
    int first_contrast = 0;  // global contrast row offset
    int n_d = 0;             // contrast rows in this design
    int c_d = 0;             // contrasts per study
    int N_d = 0;             // studies of this design
    VectorXd Y_d;
    MatrixXd S_d, W_d, R_d, M1_d;
    MatrixXd X_d;  // (n_d p) x (c_d p): one stacked identity block per study
  };
  std::vector<DesignBlock> per_design;

  double placeholder = 0.0;
};

StructuralMatrices build_structural(const NetworkDataset& ds, const BuildOptions& opts = {});

}  // namespace netmeta
