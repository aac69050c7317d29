#include "netmeta/gls.hpp"

#include "netmeta/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <numeric>
#include <string>

namespace netmeta {

std::vector<std::string> basic_parameter_labels(const NetworkDataset& ds) {
  std::vector<std::string> labels;
  const int c = ds.basic_parameters();
  for (int k = 0; k < ds.num_outcomes(); ++k)
    for (int l = 0; l < c; ++l)
      labels.push_back(ds.treatments[0] + "-" + ds.treatments[l + 1] + "@" + ds.outcomes[k]);
  return labels;
}

GlsFit fit_gls(const StructuralMatrices& sm, const CovarianceEstimates& cov,
               const NetworkDataset& ds, double ci_level) {
  if (!(ci_level > 0.0 && ci_level < 1.0))
    throw ValidationError("confidence level must lie strictly between 0 and 1");
  if (cov.sigma_beta.rows() != sm.p || cov.sigma_omega.rows() != sm.p)
    throw ValidationError("covariance estimates do not match the number of outcomes");

  const int np = sm.n * sm.p;
  GlsFit fit;
  fit.p = sm.p;
  fit.c = sm.c;
  fit.ci_level = ci_level;
  fit.labels = basic_parameter_labels(ds);

  // Marginal covariance under the fitted model; its missing rows and columns
  // are never read because the precision construction only sees the observed
  // submatrix of each design block.
  MatrixXd vhat = kron(sm.M1, cov.sigma_beta) + kron(sm.M2, cov.sigma_omega) + sm.S;

  std::vector<bool> observed(np);
  for (int i = 0; i < np; ++i) observed[i] = sm.R(i, i) > 0.5;
  std::vector<int> blocks;
  blocks.reserve(sm.per_design.size());
  for (const auto& blk : sm.per_design) blocks.push_back(blk.n_d * sm.p);

  const MatrixXd prec =
      build_precision_matrix(vhat, observed, blocks, "estimated marginal covariance");

  const MatrixXd g = symmetrize(sm.X.transpose() * prec * sm.X);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
  if (es.info() != Eigen::Success)
    throw NumericalError("weighted normal equations: eigendecomposition failed");
  const VectorXd& lam = es.eigenvalues();
  if (lam.minCoeff() <= 0.0 || lam.maxCoeff() / lam.minCoeff() > kConditionLimit) {
    // Name the parameter carrying the largest weight in the null direction.
    int worst = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    throw IdentifiabilityError("basic parameter '" + fit.labels[worst] +
                               "' is not identified by the observed network");
  }
  fit.var_delta = symmetrize(es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                             es.eigenvectors().transpose());
  fit.delta = fit.var_delta * (sm.X.transpose() * (prec * sm.Y));

  const double z = normal_quantile(0.5 + ci_level / 2.0);
  fit.se = fit.var_delta.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.ci_lower = fit.delta - z * fit.se;
  fit.ci_upper = fit.delta + z * fit.se;
  return fit;
}

ContrastEstimate functional_inference(const GlsFit& fit, const std::string& expression,
                                      const NetworkDataset& ds) {
  const auto at = expression.rfind('@');
  if (at == std::string::npos)
    throw ValidationError("contrast '" + expression + "' must look like X-Y@outcome");
  const std::string pair = expression.substr(0, at);
  const std::string out_token = expression.substr(at + 1);

  int k = ds.outcome_index(out_token);
  if (k < 0) {
    try {
      const int idx = std::stoi(out_token);
      if (idx >= 1 && idx <= ds.num_outcomes()) k = idx - 1;
    } catch (const std::exception&) {
    }
  }
  if (k < 0)
    throw ValidationError("contrast '" + expression + "': unknown outcome '" + out_token + "'");

  // Try every dash as the separator so treatment labels containing '-' still
  // resolve when the split is unambiguous.
  int xi = -1, yi = -1;
  for (size_t pos = pair.find('-'); pos != std::string::npos; pos = pair.find('-', pos + 1)) {
    const int a = ds.treatment_index(pair.substr(0, pos));
    const int b = ds.treatment_index(pair.substr(pos + 1));
    if (a >= 0 && b >= 0) {
      xi = a;
      yi = b;
      break;
    }
  }
  if (xi < 0 || yi < 0)
    throw ValidationError("contrast '" + expression + "': treatments not found in the network");
  if (xi == yi)
    throw ValidationError("contrast '" + expression + "': the two treatments must differ");

  ContrastEstimate ce;
  ce.expression = expression;
  ce.weights = VectorXd::Zero(fit.p * fit.c);
  if (yi > 0) ce.weights(k * fit.c + yi - 1) += 1.0;
  if (xi > 0) ce.weights(k * fit.c + xi - 1) -= 1.0;

  ce.estimate = ce.weights.dot(fit.delta);
  const double var = ce.weights.dot(fit.var_delta * ce.weights);
  ce.se = std::sqrt(std::max(0.0, var));
  const double z = normal_quantile(0.5 + fit.ci_level / 2.0);
  ce.ci_lower = ce.estimate - z * ce.se;
  ce.ci_upper = ce.estimate + z * ce.se;
  return ce;
}

MatrixXd cross_outcome_correlations(const GlsFit& fit, int outcome_a, int outcome_b) {
  if (fit.p < 2)
    throw ValidationError("cross-outcome correlations need at least two outcomes");
  if (outcome_a < 0 || outcome_a >= fit.p || outcome_b < 0 || outcome_b >= fit.p)
    throw ValidationError("outcome index out of range");
  const int c = fit.c;
  MatrixXd corr(c, c);
  for (int l = 0; l < c; ++l) {
    for (int m = 0; m < c; ++m) {
      const int i = outcome_a * c + l;
      const int j = outcome_b * c + m;
      const double denom = std::sqrt(fit.var_delta(i, i) * fit.var_delta(j, j));
      corr(l, m) = denom > 0.0 ? fit.var_delta(i, j) / denom : 0.0;
    }
  }
  return corr;
}

// ---------------------------------------------------------------------------
// Identifiability
// ---------------------------------------------------------------------------

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool condition_ok(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return false;
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 && sv(0) / smin <= kConditionLimit;
}

bool study_observes_pair(const Study& s, int a, int b) {
  return s.observes_outcome(a) && s.observes_outcome(b);
}

}  // namespace

IdentifiabilityReport check_identifiability(const NetworkDataset& ds) {
  if (!ds.canonical)
    throw std::invalid_argument("check_identifiability requires a canonical dataset");

  IdentifiabilityReport rep;
  const int p = ds.num_outcomes();
  const int t = ds.num_treatments();

  // Every basic parameter needs direct or indirect evidence: per outcome, the
  // observed contrasts must connect each treatment to the reference.
  bool connected = true;
  for (int k = 0; k < p; ++k) {
    UnionFind uf(t);
    for (const Study& s : ds.studies) {
      const int base = ds.treatment_index(s.design.baseline());
      for (int j = 0; j < s.contrast_count(); ++j)
        if (!s.missing(j, k)) uf.unite(base, ds.treatment_index(s.design.treatments[j + 1]));
    }
    for (int ti = 1; ti < t; ++ti) {
      if (uf.find(ti) != uf.find(0)) {
        connected = false;
        rep.notes.push_back("outcome '" + ds.outcomes[k] + "': treatment '" + ds.treatments[ti] +
                            "' has no observed path to '" + ds.treatments[0] + "'");
      }
    }
  }

  // Replication conditions, per unordered outcome pair: the between-study
  // covariance needs two studies of one design observing the pair, the
  // inconsistency covariance needs the pair observed in two designs.
  bool beta_struct = true;
  bool omega_struct = true;
  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) {
      bool beta_pair = false;
      int designs_with_pair = 0;
      for (size_t d = 0; d < ds.designs.size(); ++d) {
        int within = 0;
        for (int si : ds.design_studies[d])
          if (study_observes_pair(ds.studies[si], a, b)) ++within;
        if (within >= 2) beta_pair = true;
        if (within >= 1) ++designs_with_pair;
      }
      if (!beta_pair) {
        beta_struct = false;
        rep.notes.push_back("outcome pair (" + ds.outcomes[a] + ", " + ds.outcomes[b] +
                            "): no design has two studies observing both");
      }
      if (designs_with_pair < 2) {
        omega_struct = false;
        rep.notes.push_back("outcome pair (" + ds.outcomes[a] + ", " + ds.outcomes[b] +
                            "): fewer than two designs observe both");
      }
    }
  }

  bool common_num = true, beta_num = true, omega_num = true;
  try {
    const StructuralMatrices sm = build_structural(ds);
    const HatSystem hs = build_hat_system(sm);
    const EstimatingEquations eqs = assemble_equations(sm, hs);
    beta_num = condition_ok(eqs.c_designs);
    if (!beta_num)
      rep.notes.push_back("the design-level moment equations are numerically singular");
    omega_num = condition_ok(eqs.d_full);
    if (!omega_num)
      rep.notes.push_back("the inconsistency moment equations are numerically singular");
  } catch (const IdentifiabilityError& e) {
    common_num = false;
    beta_num = false;
    omega_num = false;
    rep.notes.emplace_back(e.what());
  }

  rep.common_effect_ok = connected && common_num;
  rep.sigma_beta_ok = rep.common_effect_ok && beta_struct && beta_num;
  rep.sigma_omega_ok = rep.sigma_beta_ok && omega_struct && omega_num;
  if (!rep.sigma_omega_ok && rep.sigma_beta_ok)
    rep.notes.push_back("the inconsistency covariance is not estimable here; "
                        "consider the consistent model");
  else if (!rep.sigma_beta_ok && rep.common_effect_ok)
    rep.notes.push_back("the between-study covariance is not estimable here; "
                        "consider the common-effect model");
  return rep;
}

// ---------------------------------------------------------------------------
// Normal quantile
// ---------------------------------------------------------------------------

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("normal_quantile: probability must lie in (0, 1)");

  // Rational approximation in three regions, then one Halley step against the
  // exact CDF brings the result to full double accuracy.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;

  double x;
  if (prob < plow) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }

  const double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - prob;
  const double u = err * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace netmeta
