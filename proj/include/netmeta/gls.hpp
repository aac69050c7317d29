#pragma once

#include "netmeta/estimator.hpp"

#include <string>
#include <vector>

namespace netmeta {

// Generalized least squares fit of the basic parameters under an estimated
// marginal covariance. delta is outcome-major: entry k*c + l is the effect of
// treatment l+1 against the reference for outcome k.
struct GlsFit {
  int p = 0;
  int c = 0;
  VectorXd delta;
  MatrixXd var_delta;
  VectorXd se;
  double ci_level = 0.95;
  VectorXd ci_lower, ci_upper;
  std::vector<std::string> labels;  // "<reference>-<treatment>@<outcome>"
};

GlsFit fit_gls(const StructuralMatrices& sm, const CovarianceEstimates& cov,
               const NetworkDataset& ds, double ci_level = 0.95);

// Labels of the fitted parameters, outcome-major: "<reference>-<treatment>@<outcome>".
std::vector<std::string> basic_parameter_labels(const NetworkDataset& ds);

// Inference on a linear function of the basic parameters, given as
// "X-Y@outcome": the effect of Y relative to X for that outcome. The outcome
// may be a name or a 1-based index.
struct ContrastEstimate {
  std::string expression;
  VectorXd weights;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

ContrastEstimate functional_inference(const GlsFit& fit, const std::string& expression,
                                      const NetworkDataset& ds);

// Correlations between the estimated basic parameters of two outcomes,
// c x c with entry (l, m) = corr(delta_hat[a*c+l], delta_hat[b*c+m]).
MatrixXd cross_outcome_correlations(const GlsFit& fit, int outcome_a, int outcome_b);

struct IdentifiabilityReport {
  bool common_effect_ok = false;
  bool sigma_beta_ok = false;
  bool sigma_omega_ok = false;
  std::vector<std::string> notes;

  bool model_ok(ModelKind kind) const {
    switch (kind) {
      case ModelKind::common_effect: return common_effect_ok;
      case ModelKind::consistent: return common_effect_ok && sigma_beta_ok;
      case ModelKind::full: return common_effect_ok && sigma_beta_ok && sigma_omega_ok;
    }
    return false;
  }
};

// Structural replication conditions combined with numerical rank checks of
// the normal equations and both moment systems.
IdentifiabilityReport check_identifiability(const NetworkDataset& ds);

// Standard normal quantile, accurate to about 1e-14.
double normal_quantile(double prob);

}  // namespace netmeta
