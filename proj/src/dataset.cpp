#include "netmeta/types.hpp"

#include "netmeta/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace netmeta {

bool Design::same_set(const Design& other) const {
  if (treatments.size() != other.treatments.size()) return false;
  std::set<std::string> a(treatments.begin(), treatments.end());
  std::set<std::string> b(other.treatments.begin(), other.treatments.end());
  return a == b;
}

std::string Design::label() const {
  bool all_single = true;
  for (const auto& t : treatments)
    if (t.size() != 1) all_single = false;
  std::string out;
  for (size_t i = 0; i < treatments.size(); ++i) {
    if (i > 0 && !all_single) out += "/";
    out += treatments[i];
  }
  return out;
}

int Study::observed_count() const {
  int n = 0;
  for (Eigen::Index i = 0; i < missing.size(); ++i)
    if (!missing(i)) ++n;
  return n;
}

bool Study::observes_outcome(int k) const {
  for (Eigen::Index j = 0; j < missing.rows(); ++j)
    if (!missing(j, k)) return true;
  return false;
}

int NetworkDataset::total_contrasts() const {
  int n = 0;
  for (const auto& s : studies) n += s.contrast_count();
  return n;
}

int NetworkDataset::design_contrast_rows(int d) const {
  int n = 0;
  for (int si : design_studies.at(d)) n += studies[si].contrast_count();
  return n;
}

int NetworkDataset::treatment_index(const std::string& label) const {
  for (size_t i = 0; i < treatments.size(); ++i)
    if (treatments[i] == label) return static_cast<int>(i);
  return -1;
}

int NetworkDataset::outcome_index(const std::string& name) const {
  for (size_t i = 0; i < outcomes.size(); ++i)
    if (outcomes[i] == name) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// Validation and canonicalization
// ---------------------------------------------------------------------------

namespace {

std::string dim_string(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

// Re-expresses a study against the canonical baseline of its design and
// reorders contrasts into network order. For a study already in canonical
// form this reduces to zeroing the covariance rows/columns of missing
// components. Effects transform linearly (row operations over contrasts);
// the covariance transforms by the same congruence. Entries of the new
// covariance are only ever needed for pairs of observed new components, and
// those touch only observed old components, so missing entries never
// propagate into observed positions.
bool canonicalize_study(const NetworkDataset& net, const Study& in, const BoolMask& in_mask,
                        Study& out, std::vector<std::string>& errs) {
  const int p = net.num_outcomes();
  const int c = in.design.contrast_count();

  std::vector<int> order(in.design.treatments.size());
  for (size_t a = 0; a < order.size(); ++a)
    order[a] = net.treatment_index(in.design.treatments[a]);
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());

  Design canon;
  for (int ti : sorted) canon.treatments.push_back(net.treatments[ti]);

  // L maps old contrast values to new ones: new contrast a compares
  // canon[a+1] against canon[0], both expressed via the old baseline.
  MatrixXd L = MatrixXd::Zero(c, c);
  const std::string& old_base = in.design.treatments.front();
  auto old_pos = [&](const std::string& t) {
    for (int j = 1; j < in.design.arm_count(); ++j)
      if (in.design.treatments[j] == t) return j - 1;
    return -1;
  };
  for (int a = 0; a < c; ++a) {
    const std::string& v = canon.treatments[a + 1];
    if (v != old_base) L(a, old_pos(v)) += 1.0;
    if (canon.baseline() != old_base) L(a, old_pos(canon.baseline())) -= 1.0;
  }

  out.id = in.id;
  out.design = canon;
  out.effects = MatrixXd::Zero(c, p);
  out.missing = BoolMask::Constant(c, p, false);
  out.within_cov = MatrixXd::Zero(p * c, p * c);

  // New effects and missingness: a new component is observed only when every
  // old component it combines is observed.
  for (int a = 0; a < c; ++a) {
    for (int k = 0; k < p; ++k) {
      double val = 0.0;
      bool miss = false;
      for (int j = 0; j < c; ++j) {
        if (L(a, j) == 0.0) continue;
        if (in_mask(j, k)) {
          miss = true;
          break;
        }
        val += L(a, j) * in.effects(j, k);
      }
      out.missing(a, k) = miss;
      out.effects(a, k) = miss ? 0.0 : val;
    }
  }

  // New covariance over observed pairs.
  bool bad_entry = false;
  for (int a = 0; a < c; ++a) {
    for (int k = 0; k < p; ++k) {
      if (out.missing(a, k)) continue;
      for (int a2 = 0; a2 < c; ++a2) {
        for (int k2 = 0; k2 < p; ++k2) {
          if (out.missing(a2, k2)) continue;
          double val = 0.0;
          for (int j = 0; j < c; ++j) {
            if (L(a, j) == 0.0) continue;
            for (int j2 = 0; j2 < c; ++j2) {
              if (L(a2, j2) == 0.0) continue;
              const double s = in.within_cov(j * p + k, j2 * p + k2);
              if (!std::isfinite(s)) bad_entry = true;
              val += L(a, j) * L(a2, j2) * s;
            }
          }
          out.within_cov(a * p + k, a2 * p + k2) = val;
        }
      }
    }
  }
  if (bad_entry) {
    errs.push_back("study '" + in.id +
                   "': within-study covariance has a non-finite entry for observed components");
    return false;
  }
  return true;
}

bool check_observed_cov(const Study& s, int p, std::vector<std::string>& errs) {
  std::vector<int> obs;
  for (int j = 0; j < s.contrast_count(); ++j)
    for (int k = 0; k < p; ++k)
      if (!s.missing(j, k)) obs.push_back(j * p + k);

  // Re-expression against the canonical baseline can lose components: an
  // observed contrast that combines with a missing one has no canonical
  // representation. A study with nothing left is a data problem.
  if (obs.empty()) {
    errs.push_back("study '" + s.id +
                   "': no observed component survives re-expression to the canonical baseline");
    return false;
  }

  MatrixXd sub(obs.size(), obs.size());
  for (size_t r = 0; r < obs.size(); ++r)
    for (size_t c = 0; c < obs.size(); ++c) sub(r, c) = s.within_cov(obs[r], obs[c]);

  const double scale = std::max(1.0, sub.cwiseAbs().maxCoeff());
  if ((sub - sub.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    errs.push_back("study '" + s.id + "': within-study covariance is not symmetric");
    return false;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (sub + sub.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0) {
    errs.push_back("study '" + s.id +
                   "': within-study covariance is not positive definite on observed components");
    return false;
  }
  return true;
}

}  // namespace

ValidationResult validate_dataset(const NetworkDataset& raw) {
  ValidationResult res;
  auto& errs = res.errors;

  if (raw.treatments.empty()) errs.push_back("dataset defines no treatments");
  if (raw.outcomes.empty()) errs.push_back("dataset defines no outcomes");
  if (raw.studies.empty()) errs.push_back("dataset contains no studies");
  {
    std::set<std::string> seen;
    for (const auto& t : raw.treatments)
      if (!seen.insert(t).second) errs.push_back("duplicate treatment label '" + t + "'");
  }
  {
    std::set<std::string> seen;
    for (const auto& o : raw.outcomes)
      if (!seen.insert(o).second) errs.push_back("duplicate outcome name '" + o + "'");
  }
  if (!errs.empty()) return res;

  const int p = raw.num_outcomes();
  std::vector<Study> canon;
  canon.reserve(raw.studies.size());
  std::set<std::string> ids;

  for (const Study& s : raw.studies) {
    if (s.id.empty()) {
      errs.push_back("study with empty id");
      continue;
    }
    if (!ids.insert(s.id).second) {
      errs.push_back("duplicate study id '" + s.id + "'");
      continue;
    }
    if (s.design.arm_count() < 2) {
      errs.push_back("study '" + s.id + "': a design needs at least two treatments");
      continue;
    }
    bool bad = false;
    std::set<std::string> seen_arm;
    for (const auto& t : s.design.treatments) {
      if (raw.treatment_index(t) < 0) {
        errs.push_back("study '" + s.id + "': unknown treatment '" + t + "'");
        bad = true;
      } else if (!seen_arm.insert(t).second) {
        errs.push_back("study '" + s.id + "': treatment '" + t + "' listed twice");
        bad = true;
      }
    }
    if (bad) continue;

    const int c = s.design.contrast_count();
    if (s.effects.rows() != c || s.effects.cols() != p) {
      errs.push_back("study '" + s.id + "': effects are " +
                     dim_string(s.effects.rows(), s.effects.cols()) + ", expected " +
                     dim_string(c, p));
      continue;
    }
    BoolMask mask = s.missing;
    if (mask.size() == 0) mask = BoolMask::Constant(c, p, false);
    if (mask.rows() != c || mask.cols() != p) {
      errs.push_back("study '" + s.id + "': missingness mask is " +
                     dim_string(mask.rows(), mask.cols()) + ", expected " + dim_string(c, p));
      continue;
    }
    if (s.within_cov.rows() != p * c || s.within_cov.cols() != p * c) {
      errs.push_back("study '" + s.id + "': within-study covariance is " +
                     dim_string(s.within_cov.rows(), s.within_cov.cols()) + ", expected " +
                     dim_string(p * c, p * c));
      continue;
    }
    bool any_observed = false;
    bool finite = true;
    for (int j = 0; j < c; ++j)
      for (int k = 0; k < p; ++k)
        if (!mask(j, k)) {
          any_observed = true;
          if (!std::isfinite(s.effects(j, k))) finite = false;
        }
    if (!any_observed) {
      errs.push_back("study '" + s.id + "': every component is missing");
      continue;
    }
    if (!finite) {
      errs.push_back("study '" + s.id + "': non-finite effect for an observed component");
      continue;
    }

    Study cs;
    if (!canonicalize_study(raw, s, mask, cs, errs)) continue;
    if (!check_observed_cov(cs, p, errs)) continue;
    canon.push_back(std::move(cs));
  }
  if (!errs.empty()) return res;

  // Group studies by design in order of first appearance; order within a
  // design follows the input.
  NetworkDataset out;
  out.treatments = raw.treatments;
  out.outcomes = raw.outcomes;
  for (const Study& s : canon) {
    bool known = false;
    for (const Design& d : out.designs)
      if (d.same_set(s.design)) known = true;
    if (!known) out.designs.push_back(s.design);
  }
  out.studies.reserve(canon.size());
  out.design_studies.assign(out.designs.size(), {});
  for (size_t d = 0; d < out.designs.size(); ++d) {
    for (size_t i = 0; i < canon.size(); ++i) {
      if (!out.designs[d].same_set(canon[i].design)) continue;
      out.design_studies[d].push_back(static_cast<int>(out.studies.size()));
      out.studies.push_back(std::move(canon[i]));
    }
  }
  out.canonical = true;
  res.dataset = std::move(out);
  return res;
}

ComparisonCounts comparison_counts(const NetworkDataset& ds) {
  ComparisonCounts counts;
  for (const Study& s : ds.studies) {
    const auto& arms = s.design.treatments;
    for (size_t a = 0; a < arms.size(); ++a)
      for (size_t b = a + 1; b < arms.size(); ++b) {
        auto key = ds.treatment_index(arms[a]) < ds.treatment_index(arms[b])
                       ? std::make_pair(arms[a], arms[b])
                       : std::make_pair(arms[b], arms[a]);
        counts[key] += 1;
      }
  }
  return counts;
}

ComparisonCounts comparison_counts(const NetworkDataset& ds, const std::string& outcome) {
  const int k = ds.outcome_index(outcome);
  if (k < 0) throw ValidationError("unknown outcome '" + outcome + "'");
  ComparisonCounts counts;
  for (const Study& s : ds.studies) {
    if (!s.observes_outcome(k)) continue;
    const auto& arms = s.design.treatments;
    for (size_t a = 0; a < arms.size(); ++a)
      for (size_t b = a + 1; b < arms.size(); ++b) {
        auto key = ds.treatment_index(arms[a]) < ds.treatment_index(arms[b])
                       ? std::make_pair(arms[a], arms[b])
                       : std::make_pair(arms[b], arms[a]);
        counts[key] += 1;
      }
  }
  return counts;
}

}  // namespace netmeta
