#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "netmeta/estimator.hpp"
#include "netmeta/gls.hpp"
#include "netmeta/report.hpp"
#include "netmeta/structure.hpp"

#include <Eigen/Eigenvalues>

using namespace netmeta;
using testutil::make_study;
using testutil::ms_network;

namespace {

double max_abs_diff(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

NetworkDataset two_study_pair() {
  NetworkDataset raw;
  raw.treatments = {"A", "B"};
  raw.outcomes = {"y"};
  raw.studies.push_back(make_study("first", {"A", "B"}, MatrixXd::Constant(1, 1, 0.0),
                                   MatrixXd::Constant(1, 1, 1.0)));
  raw.studies.push_back(make_study("second", {"A", "B"}, MatrixXd::Constant(1, 1, 2.0),
                                   MatrixXd::Constant(1, 1, 1.0)));
  return testutil::validate_or_die(raw);
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK(normal_quantile(0.995) == doctest::Approx(2.5758293035489004).epsilon(1e-12));
  CHECK(normal_quantile(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-12));
  // round trip through the cdf
  for (double prob : {1e-6, 0.01, 0.3, 0.7, 0.99, 1 - 1e-6}) {
    const double z = normal_quantile(prob);
    CHECK(0.5 * std::erfc(-z / std::sqrt(2.0)) == doctest::Approx(prob).epsilon(1e-12));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("weighted mean of a pair of unit-variance studies") {
  const NetworkDataset ds = two_study_pair();
  const StructuralMatrices sm = build_structural(ds);

  SUBCASE("no random effects: inverse-variance pooling") {
    const GlsFit fit = fit_gls(sm, common_effect_covariance(1), ds);
    CHECK(fit.delta(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.var_delta(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fit.se(0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    const double z = normal_quantile(0.975);
    CHECK(fit.ci_lower(0) == doctest::Approx(1.0 - z * fit.se(0)).epsilon(1e-12));
    CHECK(fit.ci_upper(0) == doctest::Approx(1.0 + z * fit.se(0)).epsilon(1e-12));
    CHECK(fit.labels == std::vector<std::string>{"A-B@y"});
  }

  SUBCASE("with the moment heterogeneity estimate the weights halve") {
    const HatSystem hs = build_hat_system(sm);
    const EstimatingEquations eq = assemble_equations(sm, hs);
    const CovarianceEstimates cov = solve_consistent_model(eq);
    REQUIRE(cov.sigma_beta(0, 0) == doctest::Approx(1.0));
    const GlsFit fit = fit_gls(sm, cov, ds);
    CHECK(fit.delta(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.var_delta(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("common-effect fitted values coincide with the hat projection") {
  const NetworkDataset ds = ms_network();
  const StructuralMatrices sm = build_structural(ds);
  const HatSystem hs = build_hat_system(sm);
  const GlsFit fit = fit_gls(sm, common_effect_covariance(sm.p), ds);
  CHECK((sm.X * fit.delta - hs.H * sm.Y).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(max_abs_diff(fit.var_delta, hs.xtwx_inverse) < 1e-9);
}

TEST_CASE("estimates ignore the missing-data placeholder") {
  const NetworkDataset ds = ms_network();
  FitConfig cfg;
  cfg.model = ModelKind::full;
  FitConfig alt = cfg;
  alt.placeholder = 7.5;
  const FitReport a = run_fit(ds, cfg);
  const FitReport b = run_fit(ds, alt);
  CHECK((a.fit.delta - b.fit.delta).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(max_abs_diff(a.fit.var_delta, b.fit.var_delta) < 1e-12);
}

TEST_CASE("variance under wider models dominates") {
  const NetworkDataset ds = ms_network();
  const StructuralMatrices sm = build_structural(ds);
  const HatSystem hs = build_hat_system(sm);
  const EstimatingEquations eq = assemble_equations(sm, hs);

  const CovarianceEstimates full = solve_full_model(eq);
  const CovarianceEstimates cons = solve_consistent_model(eq, BetaSource::full_model);
  const CovarianceEstimates common = common_effect_covariance(sm.p);

  const GlsFit f_full = fit_gls(sm, full, ds);
  const GlsFit f_cons = fit_gls(sm, cons, ds);
  const GlsFit f_comm = fit_gls(sm, common, ds);

  for (Eigen::Index i = 0; i < f_full.se.size(); ++i) {
    CHECK(f_full.se(i) >= f_cons.se(i) - 1e-10);
    CHECK(f_cons.se(i) >= f_comm.se(i) - 1e-10);
  }
  // the same holds in the matrix ordering, not just the diagonal
  Eigen::SelfAdjointEigenSolver<MatrixXd> d1(f_full.var_delta - f_cons.var_delta);
  Eigen::SelfAdjointEigenSolver<MatrixXd> d2(f_cons.var_delta - f_comm.var_delta);
  CHECK(d1.eigenvalues().minCoeff() > -1e-10);
  CHECK(d2.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("functional contrasts are linear combinations of the fit") {
  const NetworkDataset ds = ms_network();
  const FitReport rep = run_fit(ds, {});
  const GlsFit& fit = rep.fit;

  SUBCASE("a contrast against the reference reproduces a basic parameter") {
    const ContrastEstimate ce = functional_inference(fit, "A-C@relapse", ds);
    const int idx = 1;  // outcome 0, treatment C is basic parameter 2
    CHECK(ce.estimate == doctest::Approx(fit.delta(idx)).epsilon(1e-12));
    CHECK(ce.se == doctest::Approx(fit.se(idx)).epsilon(1e-12));
    CHECK(ce.ci_lower == doctest::Approx(fit.ci_lower(idx)).epsilon(1e-12));
  }

  SUBCASE("a non-reference contrast differences two basic parameters") {
    const ContrastEstimate ce = functional_inference(fit, "C-E@disability", ds);
    VectorXd w = VectorXd::Zero(15);
    w(1 * 5 + 3) = 1.0;   // + effect of E, second outcome
    w(1 * 5 + 1) = -1.0;  // - effect of C, second outcome
    CHECK((ce.weights - w).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ce.estimate ==
          doctest::Approx(fit.delta(8) - fit.delta(6)).epsilon(1e-12));
    const double var = w.dot(fit.var_delta * w);
    CHECK(ce.se == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    CHECK(ce.se > 0.0);
  }

  SUBCASE("outcomes can be addressed by position") {
    const ContrastEstimate by_name = functional_inference(fit, "C-E@disability", ds);
    const ContrastEstimate by_index = functional_inference(fit, "C-E@2", ds);
    CHECK(by_name.estimate == by_index.estimate);
    CHECK(by_name.se == by_index.se);
  }

  SUBCASE("bad expressions are rejected") {
    CHECK_THROWS_AS(functional_inference(fit, "C-E", ds), ValidationError);
    CHECK_THROWS_AS(functional_inference(fit, "C-Z@relapse", ds), ValidationError);
    CHECK_THROWS_AS(functional_inference(fit, "C-E@nothere", ds), ValidationError);
    CHECK_THROWS_AS(functional_inference(fit, "C-C@relapse", ds), ValidationError);
  }
}

TEST_CASE("indirect evidence yields a finite contrast") {
  // Only A-C and C-E are compared directly; the A-E effect and hence E vs C
  // inference flows through C.
  NetworkDataset raw;
  raw.treatments = {"A", "C", "E"};
  raw.outcomes = {"y"};
  Rng rng(41);
  raw.studies.push_back(testutil::random_study("ac1", {"A", "C"}, 1, rng));
  raw.studies.push_back(testutil::random_study("ac2", {"A", "C"}, 1, rng));
  raw.studies.push_back(testutil::random_study("ce1", {"C", "E"}, 1, rng));
  raw.studies.push_back(testutil::random_study("ce2", {"C", "E"}, 1, rng));
  const NetworkDataset ds = testutil::validate_or_die(raw);
  const StructuralMatrices sm = build_structural(ds);
  const GlsFit fit = fit_gls(sm, common_effect_covariance(1), ds);

  const ContrastEstimate ce = functional_inference(fit, "C-E@y", ds);
  CHECK(std::isfinite(ce.estimate));
  CHECK(ce.se > 0.0);
  CHECK(std::isfinite(ce.se));

  // and the zero-weight contrast is exactly zero
  ContrastEstimate null_ce;
  null_ce.weights = VectorXd::Zero(fit.p * fit.c);
  CHECK(null_ce.weights.dot(fit.delta) == 0.0);
}

TEST_CASE("cross-outcome correlations") {
  SUBCASE("matched parameters on a real fit stay within bounds") {
    const NetworkDataset ds = ms_network();
    const FitReport rep = run_fit(ds, {});
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const MatrixXd corr = cross_outcome_correlations(rep.fit, a, b);
        for (Eigen::Index i = 0; i < corr.rows(); ++i)
          for (Eigen::Index j = 0; j < corr.cols(); ++j) {
            CHECK(corr(i, j) <= 1.0 + 1e-12);
            CHECK(corr(i, j) >= -1.0 - 1e-12);
          }
        if (a == b)
          for (Eigen::Index i = 0; i < corr.rows(); ++i)
            CHECK(corr(i, i) == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
  SUBCASE("block-diagonal joint covariance means uncorrelated outcomes") {
    GlsFit fit;
    fit.p = 2;
    fit.c = 2;
    fit.var_delta = MatrixXd::Zero(4, 4);
    fit.var_delta.diagonal() << 1.0, 2.0, 3.0, 4.0;
    const MatrixXd corr = cross_outcome_correlations(fit, 0, 1);
    CHECK(corr.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("one outcome is rejected") {
    GlsFit fit;
    fit.p = 1;
    fit.c = 2;
    fit.var_delta = MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(cross_outcome_correlations(fit, 0, 0), ValidationError);
  }
}

TEST_CASE("relabeling outcomes permutes the fit consistently") {
  const NetworkDataset base = ms_network();
  NetworkDataset permuted_raw = testutil::ms_network_raw();
  const std::vector<int> perm = {2, 0, 1};  // new outcome k = old perm[k]
  permuted_raw.outcomes = {"lesions", "relapse", "disability"};
  for (Study& s : permuted_raw.studies) {
    const int c = s.contrast_count();
    MatrixXd eff(c, 3);
    BoolMask miss(c, 3);
    MatrixXd cov(3 * c, 3 * c);
    for (int j = 0; j < c; ++j)
      for (int k = 0; k < 3; ++k) {
        eff(j, k) = s.effects(j, perm[k]);
        miss(j, k) = s.missing(j, perm[k]);
        for (int j2 = 0; j2 < c; ++j2)
          for (int k2 = 0; k2 < 3; ++k2)
            cov(j * 3 + k, j2 * 3 + k2) = s.within_cov(j * 3 + perm[k], j2 * 3 + perm[k2]);
      }
    s.effects = eff;
    s.missing = miss;
    s.within_cov = cov;
  }
  const NetworkDataset permuted = testutil::validate_or_die(permuted_raw);

  const FitReport a = run_fit(base, {});
  const FitReport b = run_fit(permuted, {});
  const int c = 5;
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < c; ++l) {
      CHECK(b.fit.delta(k * c + l) ==
            doctest::Approx(a.fit.delta(perm[k] * c + l)).epsilon(1e-9));
      CHECK(b.fit.se(k * c + l) ==
            doctest::Approx(a.fit.se(perm[k] * c + l)).epsilon(1e-9));
    }
}

TEST_CASE("structural identifiability checks cover the three model layers") {
  SUBCASE("rich network: everything estimable") {
    const IdentifiabilityReport rep = check_identifiability(ms_network());
    CHECK(rep.common_effect_ok);
    CHECK(rep.sigma_beta_ok);
    CHECK(rep.sigma_omega_ok);
    CHECK(rep.model_ok(ModelKind::full));
    CHECK(rep.model_ok(ModelKind::consistent));
    CHECK(rep.model_ok(ModelKind::common_effect));
  }
  SUBCASE("single design: no inconsistency information") {
    Rng rng(43);
    NetworkDataset raw;
    raw.treatments = {"A", "B"};
    raw.outcomes = {"y"};
    raw.studies.push_back(testutil::random_study("one", {"A", "B"}, 1, rng));
    raw.studies.push_back(testutil::random_study("two", {"A", "B"}, 1, rng));
    raw.studies.push_back(testutil::random_study("three", {"A", "B"}, 1, rng));
    const IdentifiabilityReport rep = check_identifiability(testutil::validate_or_die(raw));
    CHECK(rep.common_effect_ok);
    CHECK(rep.sigma_beta_ok);
    CHECK_FALSE(rep.sigma_omega_ok);
    CHECK_FALSE(rep.model_ok(ModelKind::full));
    CHECK(rep.model_ok(ModelKind::consistent));
  }
  SUBCASE("no replicated design: no heterogeneity information") {
    Rng rng(44);
    NetworkDataset raw;
    raw.treatments = {"A", "B", "C"};
    raw.outcomes = {"y"};
    raw.studies.push_back(testutil::random_study("ab", {"A", "B"}, 1, rng));
    raw.studies.push_back(testutil::random_study("ac", {"A", "C"}, 1, rng));
    raw.studies.push_back(testutil::random_study("bc", {"B", "C"}, 1, rng));
    const IdentifiabilityReport rep = check_identifiability(testutil::validate_or_die(raw));
    CHECK(rep.common_effect_ok);
    CHECK_FALSE(rep.sigma_beta_ok);
    CHECK_FALSE(rep.sigma_omega_ok);
    bool mentions = false;
    for (const auto& n : rep.notes)
      if (n.find("two studies") != std::string::npos ||
          n.find("two or more studies") != std::string::npos)
        mentions = true;
    CHECK(mentions);
  }
  SUBCASE("disconnected outcome network is flagged") {
    Rng rng(45);
    NetworkDataset raw;
    raw.treatments = {"A", "B", "C"};
    raw.outcomes = {"y"};
    raw.studies.push_back(testutil::random_study("ab1", {"A", "B"}, 1, rng));
    raw.studies.push_back(testutil::random_study("ab2", {"A", "B"}, 1, rng));
    const IdentifiabilityReport rep = check_identifiability(testutil::validate_or_die(raw));
    CHECK_FALSE(rep.common_effect_ok);
    bool names_c = false;
    for (const auto& n : rep.notes)
      if (n.find("'C'") != std::string::npos) names_c = true;
    CHECK(names_c);
  }
}

TEST_CASE("unidentified basic parameters are named when fitting is forced") {
  Rng rng(46);
  NetworkDataset raw;
  raw.treatments = {"A", "B", "C"};
  raw.outcomes = {"y"};
  raw.studies.push_back(testutil::random_study("ab1", {"A", "B"}, 1, rng));
  raw.studies.push_back(testutil::random_study("ab2", {"A", "B"}, 1, rng));
  const NetworkDataset ds = testutil::validate_or_die(raw);
  const StructuralMatrices sm = build_structural(ds);
  try {
    fit_gls(sm, common_effect_covariance(1), ds);
    FAIL("expected an identifiability error");
  } catch (const IdentifiabilityError& e) {
    CHECK(std::string(e.what()).find("A-C@y") != std::string::npos);
  }
}

TEST_CASE("confidence level is validated and honored") {
  const NetworkDataset ds = two_study_pair();
  const StructuralMatrices sm = build_structural(ds);
  CHECK_THROWS_AS(fit_gls(sm, common_effect_covariance(1), ds, 0.0), ValidationError);
  CHECK_THROWS_AS(fit_gls(sm, common_effect_covariance(1), ds, 1.0), ValidationError);

  const GlsFit narrow = fit_gls(sm, common_effect_covariance(1), ds, 0.5);
  const GlsFit wide = fit_gls(sm, common_effect_covariance(1), ds, 0.99);
  CHECK(wide.ci_upper(0) - wide.ci_lower(0) > narrow.ci_upper(0) - narrow.ci_lower(0));
}
