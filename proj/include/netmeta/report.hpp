#pragma once

#include "netmeta/gls.hpp"
#include "netmeta/json_io.hpp"

#include <string>
#include <vector>

namespace netmeta {

struct FitConfig {
  ModelKind model = ModelKind::full;
  BetaSource beta_source = BetaSource::consistent_model;     // consistent model only
  BetaSubstitution substitution = BetaSubstitution::truncated;  // full model only
  double ci_level = 0.95;
  std::vector<std::string> contrasts;
  ExecPolicy policy = ExecPolicy::automatic;
  double placeholder = 0.0;  // value standing in for missing responses
};

struct FitReport {
  // Network summary
  int num_studies = 0;
  int num_designs = 0;
  int total_contrasts = 0;
  std::vector<std::string> treatments;
  std::vector<std::string> outcomes;
  std::vector<std::pair<std::string, int>> comparisons;  // "A-B" with its study count

  FitConfig config;
  CovarianceEstimates covariance;
  GlsFit fit;
  std::vector<ContrastEstimate> contrasts;
  IdentifiabilityReport identifiability;
};

// Full pipeline on a canonical dataset: identifiability check, structure
// build, moment solve for the requested model, GLS inference, contrasts.
// Throws IdentifiabilityError when the requested model is not identified.
FitReport run_fit(const NetworkDataset& ds, const FitConfig& cfg = {});

nlohmann::json report_to_json(const FitReport& rep);
FitReport report_from_json(const nlohmann::json& j);

std::string report_to_text(const FitReport& rep);
std::string report_to_csv(const FitReport& rep);

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// Replicated fits of simulated datasets. Raw (pre-truncation) covariance
// solutions are tracked entrywise because those are the unbiased quantities.
// Replications run in parallel when OpenMP is available; each replication's
// own assembly stays serial, so the summary is identical for every thread
// count.
struct SimulationSummary {
  ModelKind model = ModelKind::full;
  BetaSubstitution substitution = BetaSubstitution::truncated;
  int replications = 0;
  int failures = 0;  // replications whose fit was not identifiable
  std::uint64_t seed = 0;

  std::vector<std::string> labels;
  VectorXd truth_delta;
  VectorXd mean_delta, mc_se_delta, mean_model_se, coverage;

  MatrixXd mean_beta_raw, mc_se_beta_raw;
  MatrixXd mean_omega_raw, mc_se_omega_raw;
  double truncation_rate_beta = 0.0;
  double truncation_rate_omega = 0.0;
};

SimulationSummary run_simulation(const SimulationScenario& sc, ModelKind model,
                                 BetaSubstitution subst = BetaSubstitution::truncated,
                                 double ci_level = 0.95, bool parallel = true);

std::string simulation_summary_csv(const SimulationSummary& s, const SimulationScenario& sc);

}  // namespace netmeta
