#pragma once

#include "netmeta/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace netmeta {

// Deterministic generator with a portable normal source. mt19937_64 plus an
// explicit Box-Muller transform gives the same stream on every platform,
// which std::normal_distribution does not guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform();  // [0, 1)
  double normal();

  // Zero-mean multivariate normal. The covariance may be singular; negative
  // eigenvalues from roundoff are clamped before factoring.
  VectorXd mvn_zero(const MatrixXd& cov);

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream seed for one replication, decorrelated from neighbouring indices.
std::uint64_t derive_stream_seed(std::uint64_t base, std::uint64_t index);

struct SimulationTruth {
  VectorXd delta;       // p*c, outcome-major like the fitted parameters
  MatrixXd sigma_beta;  // p x p PSD
  MatrixXd sigma_omega;
};

struct SimulationScenario {
  NetworkDataset skeleton;  // canonical; within_cov and masks are used, effects ignored
  SimulationTruth truth;
  std::uint64_t seed = 0;
  int replications = 0;
  double missing_prob = 0.0;  // extra component-wise MCAR masking
};

// Draws one dataset: per design one inconsistency shift, per study one
// heterogeneity shift and one within-study error, all against the design's
// contrast correlation pattern. Extra MCAR masking is applied after the
// values are generated and never blanks a study completely.
NetworkDataset simulate_dataset(const SimulationScenario& sc, std::uint64_t replication);

// ---------------------------------------------------------------------------
// Independent reference fits. These share nothing with the estimator module:
// they build their own structure matrices with scalar loops and work through
// quadratic forms and traces instead of blocked kernels.
// ---------------------------------------------------------------------------

// Single-outcome network fit with scalar heterogeneity and inconsistency
// variances. Requires p = 1 and complete data.
struct UnivariateFit {
  double q_global = 0.0;
  std::vector<double> q_designs;
  double tau_beta2_raw = 0.0;
  double tau_omega2_raw = 0.0;
  double tau_beta2 = 0.0;   // clamped at zero
  double tau_omega2 = 0.0;  // clamped, computed after substituting the clamped tau_beta2
  bool omega_estimated = false;
  VectorXd delta;
  MatrixXd var_delta;
};

UnivariateFit univariate_dl_network(const NetworkDataset& ds);

// Classic pairwise random-effects fit for one comparison: the textbook
// moment estimator with a fixed-effect Q statistic.
struct PairwiseFit {
  double q = 0.0;
  double tau2_raw = 0.0;
  double tau2 = 0.0;
  double mu = 0.0;
  double var_mu = 0.0;
};

PairwiseFit pairwise_dl(const VectorXd& y, const VectorXd& v);

// Multivariate moment estimator for networks of two-arm studies under the
// consistent model, written as a meta-regression: per-study p x p blocks,
// double sums, no design-level machinery.
struct MetaRegressionFit {
  MatrixXd sigma_beta_raw;
  MatrixXd sigma_beta;  // symmetrized and PSD-truncated
};

MetaRegressionFit multivariate_metareg_mom(const NetworkDataset& ds);

}  // namespace netmeta
