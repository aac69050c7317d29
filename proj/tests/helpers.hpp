// Shared fixture builders for the test suites. Everything here is
// deterministic: values come from the library's portable generator so the
// committed JSON fixtures can be compared against these builders exactly.
#pragma once

#include "netmeta/errors.hpp"
#include "netmeta/oracles.hpp"
#include "netmeta/types.hpp"

#include <string>
#include <vector>

namespace testutil {

using namespace netmeta;

inline MatrixXd random_spd(int dim, Rng& rng, double scale = 1.0) {
  MatrixXd a(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) a(r, c) = rng.normal();
  MatrixXd s = a * a.transpose() / dim + 0.25 * MatrixXd::Identity(dim, dim);
  return scale * s;
}

inline Study make_study(std::string id, std::vector<std::string> arms, MatrixXd effects,
                        MatrixXd within_cov) {
  Study s;
  s.id = std::move(id);
  s.design.treatments = std::move(arms);
  const int c = s.design.contrast_count();
  const int p = static_cast<int>(effects.cols());
  s.effects = std::move(effects);
  s.missing = BoolMask::Constant(c, p, false);
  s.within_cov = std::move(within_cov);
  return s;
}

inline NetworkDataset validate_or_die(NetworkDataset raw) {
  ValidationResult res = validate_dataset(raw);
  if (!res.ok()) {
    std::string msg = "fixture failed validation:";
    for (const auto& e : res.errors) msg += "\n  " + e;
    throw std::logic_error(msg);
  }
  return *std::move(res.dataset);
}

// Random effects and a moderately correlated within-study covariance for a
// study on the given arms.
inline Study random_study(const std::string& id, std::vector<std::string> arms, int p,
                          Rng& rng) {
  const int c = static_cast<int>(arms.size()) - 1;
  MatrixXd effects(c, p);
  for (int j = 0; j < c; ++j)
    for (int k = 0; k < p; ++k) effects(j, k) = rng.normal();
  return make_study(id, std::move(arms), std::move(effects), random_spd(p * c, rng, 0.5));
}

// Six treatments, three outcomes, thirteen studies over eight designs:
// AB x2, AC x3, AD, BC, BD x2, CD, AEF x2, CEF. The AD, BC and both BD
// studies do not report the third outcome, so that outcome's evidence
// network is missing three edges. Shape and missingness are what the tests
// rely on; the numbers are arbitrary reproducible draws.
inline NetworkDataset ms_network_raw() {
  NetworkDataset raw;
  raw.treatments = {"A", "B", "C", "D", "E", "F"};
  raw.outcomes = {"relapse", "disability", "lesions"};
  Rng rng(20250211);

  const std::vector<std::vector<std::string>> shapes = {
      {"A", "B"}, {"A", "B"}, {"A", "C"}, {"A", "C"}, {"A", "C"},
      {"A", "D"}, {"B", "C"}, {"B", "D"}, {"B", "D"}, {"C", "D"},
      {"A", "E", "F"}, {"A", "E", "F"}, {"C", "E", "F"}};
  const std::vector<int> no_third_outcome = {5, 6, 7, 8};  // AD, BC, BD, BD

  for (size_t i = 0; i < shapes.size(); ++i) {
    std::string id;
    for (const auto& t : shapes[i]) id += t;
    id += "-" + std::to_string(i + 1);
    Study s = random_study(id, shapes[i], 3, rng);
    for (int idx : no_third_outcome)
      if (static_cast<int>(i) == idx) {
        for (int j = 0; j < s.contrast_count(); ++j) {
          s.missing(j, 2) = true;
          s.effects(j, 2) = 0.0;
        }
      }
    raw.studies.push_back(std::move(s));
  }
  return raw;
}

inline NetworkDataset ms_network() { return validate_or_die(ms_network_raw()); }

// Four treatments, thirteen studies over six designs: AB, BC x5, BD x2,
// CD x2, ABD, BCD x2. Sixteen contrast rows in total; used to pin down the
// study-level and design-level grouping matrices.
inline NetworkDataset sixteen_row_network(int p = 1) {
  NetworkDataset raw;
  raw.treatments = {"A", "B", "C", "D"};
  for (int k = 0; k < p; ++k) raw.outcomes.push_back("y" + std::to_string(k + 1));
  Rng rng(4711);

  const std::vector<std::vector<std::string>> shapes = {
      {"A", "B"}, {"B", "C"}, {"B", "C"}, {"B", "C"}, {"B", "C"}, {"B", "C"},
      {"B", "D"}, {"B", "D"}, {"C", "D"}, {"C", "D"},
      {"A", "B", "D"}, {"B", "C", "D"}, {"B", "C", "D"}};
  for (size_t i = 0; i < shapes.size(); ++i)
    raw.studies.push_back(
        random_study("s" + std::to_string(i + 1), shapes[i], p, rng));
  return validate_or_die(raw);
}

struct RandomNetworkOptions {
  int p = 2;
  int extra_designs = 2;    // beyond the two replicated anchor designs
  double missing_prob = 0;  // per component, applied after generation
  bool multi_arm = true;
};

// A network that keeps both covariance matrices identifiable by
// construction: one design over every treatment with two studies plus a
// replicated two-arm design, then a few random designs. Missingness never
// wipes out a whole study.
inline NetworkDataset random_network(Rng& rng, const RandomNetworkOptions& opt) {
  const int t = 3 + static_cast<int>(rng.uniform() * 2.999);  // 3..5
  NetworkDataset raw;
  for (int i = 0; i < t; ++i) raw.treatments.push_back(std::string(1, char('A' + i)));
  for (int k = 0; k < opt.p; ++k) raw.outcomes.push_back("y" + std::to_string(k + 1));

  int next_id = 1;
  auto add = [&](std::vector<std::string> arms) {
    raw.studies.push_back(
        random_study("s" + std::to_string(next_id++), std::move(arms), opt.p, rng));
  };

  std::vector<std::string> all = raw.treatments;
  if (opt.multi_arm) {
    add(all);
    add(all);
  } else {
    for (int i = 1; i < t; ++i) {
      add({"A", raw.treatments[i]});
      add({"A", raw.treatments[i]});
    }
  }
  add({raw.treatments[0], raw.treatments[1]});
  add({raw.treatments[0], raw.treatments[1]});

  for (int e = 0; e < opt.extra_designs; ++e) {
    const int a = static_cast<int>(rng.uniform() * t);
    int b = static_cast<int>(rng.uniform() * (t - 1));
    if (b >= a) ++b;
    std::vector<std::string> arms = {raw.treatments[std::min(a, b)],
                                     raw.treatments[std::max(a, b)]};
    if (opt.multi_arm && t > 2 && rng.uniform() < 0.4) {
      for (int i = 0; i < t; ++i)
        if (raw.treatments[i] != arms[0] && raw.treatments[i] != arms[1]) {
          arms.push_back(raw.treatments[i]);
          break;
        }
    }
    add(arms);
  }

  if (opt.missing_prob > 0) {
    for (Study& s : raw.studies) {
      const int c = s.contrast_count();
      const int p = opt.p;
      for (int j = 0; j < c; ++j)
        for (int k = 0; k < p; ++k)
          if (rng.uniform() < opt.missing_prob) s.missing(j, k) = true;
      // keep at least one component
      bool any = false;
      for (int j = 0; j < c && !any; ++j)
        for (int k = 0; k < p && !any; ++k) any = !s.missing(j, k);
      if (!any) s.missing(0, 0) = false;
      for (int j = 0; j < c; ++j)
        for (int k = 0; k < p; ++k)
          if (s.missing(j, k)) s.effects(j, k) = 0.0;
    }
  }
  return validate_or_die(raw);
}

// All-two-arm network: one replicated A-X design per non-reference
// treatment plus single-study extras.
inline NetworkDataset random_two_arm_network(Rng& rng, int p, int extra = 2) {
  RandomNetworkOptions opt;
  opt.p = p;
  opt.extra_designs = 0;
  opt.multi_arm = false;
  NetworkDataset base = random_network(rng, opt);

  NetworkDataset raw;
  raw.treatments = base.treatments;
  raw.outcomes = base.outcomes;
  raw.studies = base.studies;
  const int t = base.num_treatments();
  int next_id = 1000;
  for (int e = 0; e < extra; ++e) {
    const int a = static_cast<int>(rng.uniform() * t);
    int b = static_cast<int>(rng.uniform() * (t - 1));
    if (b >= a) ++b;
    raw.studies.push_back(random_study("s" + std::to_string(next_id++),
                                       {raw.treatments[std::min(a, b)],
                                        raw.treatments[std::max(a, b)]},
                                       p, rng));
  }
  return validate_or_die(raw);
}

}  // namespace testutil
