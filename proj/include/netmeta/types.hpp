#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace netmeta {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using BoolMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// A design is the set of treatments a study compares. Canonical storage is
// baseline first (the included treatment with the lowest network index), then
// the remaining treatments in network order.
struct Design {
  std::vector<std::string> treatments;

  int arm_count() const { return static_cast<int>(treatments.size()); }
  int contrast_count() const { return arm_count() - 1; }
  const std::string& baseline() const { return treatments.front(); }
  bool same_set(const Design& other) const;
  std::string label() const;
};

// One study's data, relative to its design baseline. effects is c_d x p
// (contrast by outcome); within_cov is (p*c_d) x (p*c_d) over components
// stacked contrast-major: component (j, k) sits at index j*p + k.
struct Study {
  std::string id;
  Design design;
  MatrixXd effects;
  BoolMask missing;      // c_d x p, true where the component is unobserved
  MatrixXd within_cov;   // rows/cols of missing components are zeroed

  int contrast_count() const { return design.contrast_count(); }
  int observed_count() const;
  bool observes_outcome(int k) const;
};

struct NetworkDataset {
  std::vector<std::string> treatments;  // index 0 is the network reference
  std::vector<std::string> outcomes;
  std::vector<Study> studies;

  // Filled in by validate_dataset: designs in order of first appearance,
  // studies regrouped so each design's studies are contiguous.
  std::vector<Design> designs;
  std::vector<std::vector<int>> design_studies;
  bool canonical = false;

  int num_outcomes() const { return static_cast<int>(outcomes.size()); }
  int num_treatments() const { return static_cast<int>(treatments.size()); }
  // Basic parameters per outcome: one effect per non-reference treatment.
  int basic_parameters() const { return num_treatments() - 1; }
  int num_studies() const { return static_cast<int>(studies.size()); }
  int num_designs() const { return static_cast<int>(designs.size()); }
  int total_contrasts() const;
  int design_contrast_rows(int d) const;  // n_d: contrasts summed over the design's studies

  int treatment_index(const std::string& label) const;  // -1 when unknown
  int outcome_index(const std::string& name) const;     // -1 when unknown
};

struct ValidationResult {
  std::optional<NetworkDataset> dataset;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

// Checks a raw dataset and produces the canonical form: designs re-expressed
// against their canonical baseline, studies grouped by design in order of
// first appearance. Idempotent on already-canonical input.
ValidationResult validate_dataset(const NetworkDataset& raw);

// Direct comparison counts per unordered treatment pair, over all studies or
// restricted to studies observing one outcome.
using ComparisonCounts = std::map<std::pair<std::string, std::string>, int>;
ComparisonCounts comparison_counts(const NetworkDataset& ds);
ComparisonCounts comparison_counts(const NetworkDataset& ds, const std::string& outcome);

}  // namespace netmeta
