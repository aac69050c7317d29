#include "netmeta/report.hpp"

#include "netmeta/errors.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>

namespace netmeta {

using nlohmann::json;

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ValidationError(where + ": expected nested arrays");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw ValidationError(where + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ValidationError(where + ": expected numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array");
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(where + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

const char* substitution_name(BetaSubstitution s) {
  return s == BetaSubstitution::truncated ? "truncated" : "raw";
}

const char* beta_source_name(BetaSource s) {
  return s == BetaSource::consistent_model ? "consistent_model" : "full_model";
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::full: return "full";
    case ModelKind::consistent: return "consistent";
    case ModelKind::common_effect: return "common";
  }
  return "full";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "full") return ModelKind::full;
  if (name == "consistent") return ModelKind::consistent;
  if (name == "common") return ModelKind::common_effect;
  throw ValidationError("unknown model '" + name + "' (expected full, consistent or common)");
}

FitReport run_fit(const NetworkDataset& ds, const FitConfig& cfg) {
  if (!ds.canonical) throw std::invalid_argument("run_fit requires a canonical dataset");

  FitReport rep;
  rep.config = cfg;
  rep.num_studies = ds.num_studies();
  rep.num_designs = ds.num_designs();
  rep.total_contrasts = ds.total_contrasts();
  rep.treatments = ds.treatments;
  rep.outcomes = ds.outcomes;
  {
    const ComparisonCounts counts = comparison_counts(ds);
    for (size_t a = 0; a < ds.treatments.size(); ++a)
      for (size_t b = a + 1; b < ds.treatments.size(); ++b) {
        auto it = counts.find({ds.treatments[a], ds.treatments[b]});
        if (it != counts.end())
          rep.comparisons.emplace_back(ds.treatments[a] + "-" + ds.treatments[b], it->second);
      }
  }

  rep.identifiability = check_identifiability(ds);
  if (!rep.identifiability.model_ok(cfg.model)) {
    std::ostringstream os;
    os << "the " << model_kind_name(cfg.model) << " model is not identified by this network:";
    for (const auto& note : rep.identifiability.notes) os << "\n  - " << note;
    if (cfg.model != ModelKind::common_effect)
      os << "\nsimpler models should be considered instead (--model "
         << (cfg.model == ModelKind::full ? "consistent or --model common" : "common") << ")";
    throw IdentifiabilityError(os.str());
  }

  const StructuralMatrices sm = build_structural(ds, {cfg.placeholder});
  const HatSystem hs = build_hat_system(sm);

  if (cfg.model == ModelKind::common_effect) {
    rep.covariance = common_effect_covariance(sm.p);
  } else {
    const EstimatingEquations eqs = assemble_equations(sm, hs, cfg.policy);
    rep.covariance = cfg.model == ModelKind::full
                         ? solve_full_model(eqs, cfg.substitution)
                         : solve_consistent_model(eqs, cfg.beta_source);
  }

  rep.fit = fit_gls(sm, rep.covariance, ds, cfg.ci_level);
  for (const auto& expr : cfg.contrasts)
    rep.contrasts.push_back(functional_inference(rep.fit, expr, ds));
  return rep;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

json report_to_json(const FitReport& rep) {
  json j;
  j["network"] = {{"studies", rep.num_studies},
                  {"designs", rep.num_designs},
                  {"contrast_rows", rep.total_contrasts},
                  {"treatments", rep.treatments},
                  {"outcomes", rep.outcomes}};
  json comps = json::array();
  for (const auto& [pair, count] : rep.comparisons)
    comps.push_back({{"pair", pair}, {"studies", count}});
  j["network"]["comparisons"] = std::move(comps);

  j["model"] = {{"kind", model_kind_name(rep.config.model)},
                {"substitution", substitution_name(rep.config.substitution)},
                {"sigma_beta_source", beta_source_name(rep.config.beta_source)},
                {"ci_level", rep.config.ci_level},
                {"placeholder", rep.config.placeholder}};

  j["covariance"] = {{"sigma_beta", matrix_to_json(rep.covariance.sigma_beta)},
                     {"sigma_omega", matrix_to_json(rep.covariance.sigma_omega)},
                     {"sigma_beta_raw", matrix_to_json(rep.covariance.sigma_beta_raw)},
                     {"sigma_omega_raw", matrix_to_json(rep.covariance.sigma_omega_raw)},
                     {"clamped_beta", rep.covariance.clamped_beta},
                     {"clamped_omega", rep.covariance.clamped_omega}};

  json est = json::array();
  for (Eigen::Index i = 0; i < rep.fit.delta.size(); ++i)
    est.push_back({{"label", rep.fit.labels[i]},
                   {"estimate", rep.fit.delta(i)},
                   {"se", rep.fit.se(i)},
                   {"ci_lower", rep.fit.ci_lower(i)},
                   {"ci_upper", rep.fit.ci_upper(i)}});
  j["estimates"] = std::move(est);
  j["var_delta"] = matrix_to_json(rep.fit.var_delta);

  if (!rep.contrasts.empty()) {
    json cts = json::array();
    for (const auto& ce : rep.contrasts)
      cts.push_back({{"expression", ce.expression},
                     {"weights", vector_to_json(ce.weights)},
                     {"estimate", ce.estimate},
                     {"se", ce.se},
                     {"ci_lower", ce.ci_lower},
                     {"ci_upper", ce.ci_upper}});
    j["contrasts"] = std::move(cts);
  }

  j["identifiability"] = {{"common_effect", rep.identifiability.common_effect_ok},
                          {"sigma_beta", rep.identifiability.sigma_beta_ok},
                          {"sigma_omega", rep.identifiability.sigma_omega_ok},
                          {"notes", rep.identifiability.notes}};
  return j;
}

FitReport report_from_json(const json& j) {
  FitReport rep;
  const json& net = j.at("network");
  rep.num_studies = net.at("studies").get<int>();
  rep.num_designs = net.at("designs").get<int>();
  rep.total_contrasts = net.at("contrast_rows").get<int>();
  rep.treatments = net.at("treatments").get<std::vector<std::string>>();
  rep.outcomes = net.at("outcomes").get<std::vector<std::string>>();
  for (const auto& e : net.at("comparisons"))
    rep.comparisons.emplace_back(e.at("pair").get<std::string>(), e.at("studies").get<int>());

  const json& model = j.at("model");
  rep.config.model = model_kind_from_name(model.at("kind").get<std::string>());
  rep.config.substitution = model.at("substitution").get<std::string>() == "raw"
                                ? BetaSubstitution::raw
                                : BetaSubstitution::truncated;
  rep.config.beta_source = model.at("sigma_beta_source").get<std::string>() == "full_model"
                               ? BetaSource::full_model
                               : BetaSource::consistent_model;
  rep.config.ci_level = model.at("ci_level").get<double>();
  rep.config.placeholder = model.at("placeholder").get<double>();

  const json& cov = j.at("covariance");
  rep.covariance.model = rep.config.model;
  rep.covariance.substitution = rep.config.substitution;
  rep.covariance.sigma_beta = matrix_from_json(cov.at("sigma_beta"), "covariance.sigma_beta");
  rep.covariance.sigma_omega = matrix_from_json(cov.at("sigma_omega"), "covariance.sigma_omega");
  rep.covariance.sigma_beta_raw =
      matrix_from_json(cov.at("sigma_beta_raw"), "covariance.sigma_beta_raw");
  rep.covariance.sigma_omega_raw =
      matrix_from_json(cov.at("sigma_omega_raw"), "covariance.sigma_omega_raw");
  rep.covariance.clamped_beta = cov.at("clamped_beta").get<std::vector<double>>();
  rep.covariance.clamped_omega = cov.at("clamped_omega").get<std::vector<double>>();

  const json& est = j.at("estimates");
  const Eigen::Index m = static_cast<Eigen::Index>(est.size());
  rep.fit.p = static_cast<int>(rep.outcomes.size());
  rep.fit.c = static_cast<int>(rep.treatments.size()) - 1;
  rep.fit.ci_level = rep.config.ci_level;
  rep.fit.delta.resize(m);
  rep.fit.se.resize(m);
  rep.fit.ci_lower.resize(m);
  rep.fit.ci_upper.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const json& e = est[i];
    rep.fit.labels.push_back(e.at("label").get<std::string>());
    rep.fit.delta(i) = e.at("estimate").get<double>();
    rep.fit.se(i) = e.at("se").get<double>();
    rep.fit.ci_lower(i) = e.at("ci_lower").get<double>();
    rep.fit.ci_upper(i) = e.at("ci_upper").get<double>();
  }
  rep.fit.var_delta = matrix_from_json(j.at("var_delta"), "var_delta");

  for (const auto& e : j.value("contrasts", json::array())) {
    ContrastEstimate ce;
    ce.expression = e.at("expression").get<std::string>();
    ce.weights = vector_from_json(e.at("weights"), "contrasts.weights");
    ce.estimate = e.at("estimate").get<double>();
    ce.se = e.at("se").get<double>();
    ce.ci_lower = e.at("ci_lower").get<double>();
    ce.ci_upper = e.at("ci_upper").get<double>();
    rep.contrasts.push_back(std::move(ce));
    rep.config.contrasts.push_back(rep.contrasts.back().expression);
  }

  const json& ident = j.at("identifiability");
  rep.identifiability.common_effect_ok = ident.at("common_effect").get<bool>();
  rep.identifiability.sigma_beta_ok = ident.at("sigma_beta").get<bool>();
  rep.identifiability.sigma_omega_ok = ident.at("sigma_omega").get<bool>();
  rep.identifiability.notes = ident.at("notes").get<std::vector<std::string>>();
  return rep;
}

// ---------------------------------------------------------------------------
// Text and CSV
// ---------------------------------------------------------------------------

namespace {

void print_matrix(std::ostringstream& os, const MatrixXd& m, const char* indent) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << indent;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) os << "  ";
      os << fmt(m(r, c), "%10.5g");
    }
    os << "\n";
  }
}

}  // namespace

std::string report_to_text(const FitReport& rep) {
  std::ostringstream os;
  os << "Network: " << rep.num_studies << " studies, " << rep.num_designs << " designs, "
     << rep.total_contrasts << " contrast rows\n";
  os << "Treatments:";
  for (size_t i = 0; i < rep.treatments.size(); ++i)
    os << " " << rep.treatments[i] << (i == 0 ? " (reference)" : "");
  os << "\nOutcomes:";
  for (const auto& o : rep.outcomes) os << " " << o;
  os << "\nDirect comparisons:";
  for (const auto& [pair, count] : rep.comparisons) os << " " << pair << ":" << count;
  os << "\n\n";

  os << "Model: " << model_kind_name(rep.config.model);
  if (rep.config.model == ModelKind::full)
    os << " (substitution: " << substitution_name(rep.config.substitution) << ")";
  if (rep.config.model == ModelKind::consistent)
    os << " (sigma_beta from: " << beta_source_name(rep.config.beta_source) << ")";
  os << ", " << fmt(100.0 * rep.config.ci_level, "%.4g") << "% intervals\n\n";

  if (rep.config.model != ModelKind::common_effect) {
    os << "Between-study covariance:\n";
    print_matrix(os, rep.covariance.sigma_beta, "  ");
    if (!rep.covariance.clamped_beta.empty()) {
      os << "  negative eigenvalues clamped:";
      for (double v : rep.covariance.clamped_beta) os << " " << fmt(v);
      os << "\n";
    }
    os << "Inconsistency covariance:\n";
    print_matrix(os, rep.covariance.sigma_omega, "  ");
    if (!rep.covariance.clamped_omega.empty()) {
      os << "  negative eigenvalues clamped:";
      for (double v : rep.covariance.clamped_omega) os << " " << fmt(v);
      os << "\n";
    }
    os << "\n";
  }

  // estimate (se) grid, comparisons down, outcomes across
  const int c = rep.fit.c;
  const int p = rep.fit.p;
  os << "Estimates, " << rep.treatments[0] << "-X by outcome, estimate (se):\n";
  os << "          ";
  for (const auto& o : rep.outcomes)
    os << o << std::string(o.size() < 20 ? 20 - o.size() : 1, ' ');
  os << "\n";
  for (int l = 0; l < c; ++l) {
    std::string row_label = rep.treatments[0] + "-" + rep.treatments[l + 1];
    os << "  " << row_label << std::string(row_label.size() < 8 ? 8 - row_label.size() : 1, ' ');
    for (int k = 0; k < p; ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(k) * c + l;
      std::string cell = fmt(rep.fit.delta(i), "%.3f") + " (" + fmt(rep.fit.se(i), "%.3f") + ")";
      os << cell << std::string(cell.size() < 20 ? 20 - cell.size() : 1, ' ');
    }
    os << "\n";
  }
  os << "\nIntervals:\n";
  for (Eigen::Index i = 0; i < rep.fit.delta.size(); ++i)
    os << "  " << rep.fit.labels[i] << ": " << fmt(rep.fit.delta(i)) << "  ["
       << fmt(rep.fit.ci_lower(i)) << ", " << fmt(rep.fit.ci_upper(i)) << "]\n";

  if (!rep.contrasts.empty()) {
    os << "\nContrasts:\n";
    for (const auto& ce : rep.contrasts)
      os << "  " << ce.expression << ": " << fmt(ce.estimate) << " (se " << fmt(ce.se) << ")  ["
         << fmt(ce.ci_lower) << ", " << fmt(ce.ci_upper) << "]\n";
  }

  os << "\nIdentifiability: common-effect " << (rep.identifiability.common_effect_ok ? "ok" : "NOT identified")
     << ", between-study " << (rep.identifiability.sigma_beta_ok ? "ok" : "NOT identified")
     << ", inconsistency " << (rep.identifiability.sigma_omega_ok ? "ok" : "NOT identified")
     << "\n";
  for (const auto& note : rep.identifiability.notes) os << "  note: " << note << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Simulation studies
// ---------------------------------------------------------------------------

namespace {

struct RepOutcome {
  bool ok = false;
  VectorXd delta, se;
  std::vector<std::uint8_t> covers;
  MatrixXd beta_raw, omega_raw;
  bool clamped_beta = false, clamped_omega = false;
};

RepOutcome one_replication(const SimulationScenario& sc, ModelKind model,
                           BetaSubstitution subst, double ci_level, std::uint64_t r) {
  RepOutcome out;
  try {
    const NetworkDataset ds = simulate_dataset(sc, r);
    const StructuralMatrices sm = build_structural(ds);
    const HatSystem hs = build_hat_system(sm);
    CovarianceEstimates cov;
    if (model == ModelKind::common_effect) {
      cov = common_effect_covariance(sm.p);
    } else {
      // Serial assembly keeps each replication bit-identical no matter how
      // the replication loop itself is scheduled.
      const EstimatingEquations eqs = assemble_equations(sm, hs, ExecPolicy::serial);
      cov = model == ModelKind::full ? solve_full_model(eqs, subst)
                                     : solve_consistent_model(eqs);
    }
    const GlsFit fit = fit_gls(sm, cov, ds, ci_level);
    out.delta = fit.delta;
    out.se = fit.se;
    out.covers.resize(fit.delta.size());
    for (Eigen::Index i = 0; i < fit.delta.size(); ++i)
      out.covers[i] = sc.truth.delta(i) >= fit.ci_lower(i) && sc.truth.delta(i) <= fit.ci_upper(i);
    out.beta_raw = cov.sigma_beta_raw;
    out.omega_raw = cov.sigma_omega_raw;
    out.clamped_beta = !cov.clamped_beta.empty();
    out.clamped_omega = !cov.clamped_omega.empty();
    out.ok = true;
  } catch (const Error&) {
    out.ok = false;
  }
  return out;
}

// Two-pass mean and Monte Carlo standard error, accumulated in index order.
void mean_and_mcse(const std::vector<double>& xs, double& mean, double& mcse) {
  const double k = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / k;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  mcse = k > 1.0 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
}

}  // namespace

SimulationSummary run_simulation(const SimulationScenario& sc, ModelKind model,
                                 BetaSubstitution subst, double ci_level, bool parallel) {
  SimulationSummary sum;
  sum.model = model;
  sum.substitution = subst;
  sum.replications = sc.replications;
  sum.seed = sc.seed;
  sum.labels = basic_parameter_labels(sc.skeleton);
  sum.truth_delta = sc.truth.delta;

  const int r_total = sc.replications;
  std::vector<RepOutcome> reps(r_total);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int r = 0; r < r_total; ++r)
    reps[r] = one_replication(sc, model, subst, ci_level, static_cast<std::uint64_t>(r));
  (void)parallel;

  const int p = sc.skeleton.num_outcomes();
  const Eigen::Index m = sc.truth.delta.size();
  sum.mean_delta.resize(m);
  sum.mc_se_delta.resize(m);
  sum.mean_model_se.resize(m);
  sum.coverage.resize(m);
  sum.mean_beta_raw.resize(p, p);
  sum.mc_se_beta_raw.resize(p, p);
  sum.mean_omega_raw.resize(p, p);
  sum.mc_se_omega_raw.resize(p, p);

  std::vector<int> ok_index;
  for (int r = 0; r < r_total; ++r) {
    if (reps[r].ok) ok_index.push_back(r);
  }
  sum.failures = r_total - static_cast<int>(ok_index.size());
  if (ok_index.empty()) throw NumericalError("every simulation replication failed to fit");
  const double k = static_cast<double>(ok_index.size());

  std::vector<double> buf(ok_index.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    for (size_t r = 0; r < ok_index.size(); ++r) buf[r] = reps[ok_index[r]].delta(i);
    mean_and_mcse(buf, sum.mean_delta(i), sum.mc_se_delta(i));
    double se_sum = 0.0, cover_sum = 0.0;
    for (int r : ok_index) {
      se_sum += reps[r].se(i);
      cover_sum += reps[r].covers[i];
    }
    sum.mean_model_se(i) = se_sum / k;
    sum.coverage(i) = cover_sum / k;
  }
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < p; ++b) {
      for (size_t r = 0; r < ok_index.size(); ++r) buf[r] = reps[ok_index[r]].beta_raw(a, b);
      mean_and_mcse(buf, sum.mean_beta_raw(a, b), sum.mc_se_beta_raw(a, b));
      for (size_t r = 0; r < ok_index.size(); ++r) buf[r] = reps[ok_index[r]].omega_raw(a, b);
      mean_and_mcse(buf, sum.mean_omega_raw(a, b), sum.mc_se_omega_raw(a, b));
    }
  }
  double tb = 0.0, to = 0.0;
  for (int r : ok_index) {
    tb += reps[r].clamped_beta;
    to += reps[r].clamped_omega;
  }
  sum.truncation_rate_beta = tb / k;
  sum.truncation_rate_omega = to / k;
  return sum;
}

std::string simulation_summary_csv(const SimulationSummary& s, const SimulationScenario& sc) {
  std::ostringstream os;
  os << "# model," << model_kind_name(s.model) << "\n";
  os << "# substitution," << substitution_name(s.substitution) << "\n";
  os << "# replications," << s.replications << "\n";
  os << "# failures," << s.failures << "\n";
  os << "# seed," << s.seed << "\n";
  os << "section,label,truth,mean,mc_se,coverage,mean_model_se\n";
  for (Eigen::Index i = 0; i < s.mean_delta.size(); ++i)
    os << "delta," << s.labels[i] << "," << fmt(s.truth_delta(i), "%.12g") << ","
       << fmt(s.mean_delta(i), "%.12g") << "," << fmt(s.mc_se_delta(i), "%.12g") << ","
       << fmt(s.coverage(i), "%.12g") << "," << fmt(s.mean_model_se(i), "%.12g") << "\n";
  const int p = static_cast<int>(s.mean_beta_raw.rows());
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      os << "sigma_beta_raw,[" << a + 1 << "][" << b + 1 << "],"
         << fmt(sc.truth.sigma_beta(a, b), "%.12g") << "," << fmt(s.mean_beta_raw(a, b), "%.12g")
         << "," << fmt(s.mc_se_beta_raw(a, b), "%.12g") << ",,\n";
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      os << "sigma_omega_raw,[" << a + 1 << "][" << b + 1 << "],"
         << fmt(sc.truth.sigma_omega(a, b), "%.12g") << ","
         << fmt(s.mean_omega_raw(a, b), "%.12g") << "," << fmt(s.mc_se_omega_raw(a, b), "%.12g")
         << ",,\n";
  os << "truncation,sigma_beta,," << fmt(s.truncation_rate_beta, "%.12g") << ",,,\n";
  os << "truncation,sigma_omega,," << fmt(s.truncation_rate_omega, "%.12g") << ",,,\n";
  return os.str();
}

std::string report_to_csv(const FitReport& rep) {
  std::ostringstream os;
  os << "label,estimate,se,ci_lower,ci_upper\n";
  for (Eigen::Index i = 0; i < rep.fit.delta.size(); ++i)
    os << rep.fit.labels[i] << "," << fmt(rep.fit.delta(i), "%.12g") << ","
       << fmt(rep.fit.se(i), "%.12g") << "," << fmt(rep.fit.ci_lower(i), "%.12g") << ","
       << fmt(rep.fit.ci_upper(i), "%.12g") << "\n";
  for (const auto& ce : rep.contrasts)
    os << ce.expression << "," << fmt(ce.estimate, "%.12g") << "," << fmt(ce.se, "%.12g") << ","
       << fmt(ce.ci_lower, "%.12g") << "," << fmt(ce.ci_upper, "%.12g") << "\n";
  return os.str();
}

}  // namespace netmeta
