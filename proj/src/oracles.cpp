#include "netmeta/oracles.hpp"

#include "netmeta/errors.hpp"
#include "netmeta/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>

namespace netmeta {

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

VectorXd Rng::mvn_zero(const MatrixXd& cov) {
  const Eigen::Index m = cov.rows();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw std::invalid_argument("mvn_zero: eigendecomposition failed");
  VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z(i) = normal();
  return es.eigenvectors() * (lam.cwiseSqrt().asDiagonal() * z);
}

std::uint64_t derive_stream_seed(std::uint64_t base, std::uint64_t index) {
  // One splitmix64 output per stream; streams advance by the golden ratio.
  std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

MatrixXd ones_halves(int c) {
  MatrixXd p = MatrixXd::Constant(c, c, 0.5);
  p.diagonal().setOnes();
  return p;
}

}  // namespace

NetworkDataset simulate_dataset(const SimulationScenario& sc, std::uint64_t replication) {
  const NetworkDataset& sk = sc.skeleton;
  if (!sk.canonical)
    throw std::invalid_argument("simulate_dataset requires a canonical skeleton");
  const int p = sk.num_outcomes();
  const int c = sk.basic_parameters();
  if (sc.truth.delta.size() != static_cast<Eigen::Index>(p) * c)
    throw ValidationError("scenario truth: delta length does not match the network");
  if (sc.truth.sigma_beta.rows() != p || sc.truth.sigma_beta.cols() != p ||
      sc.truth.sigma_omega.rows() != p || sc.truth.sigma_omega.cols() != p)
    throw ValidationError("scenario truth: covariance dimensions do not match the outcomes");
  const auto require_psd = [](const MatrixXd& m, const char* which) {
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()))
      throw ValidationError(std::string("scenario truth: ") + which + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + m.cwiseAbs().maxCoeff()))
      throw ValidationError(std::string("scenario truth: ") + which +
                            " must be positive semidefinite");
  };
  require_psd(sc.truth.sigma_beta, "sigma_beta");
  require_psd(sc.truth.sigma_omega, "sigma_omega");
  if (sc.missing_prob < 0.0 || sc.missing_prob >= 1.0)
    throw ValidationError("scenario: missing probability must lie in [0, 1)");

  Rng rng(derive_stream_seed(sc.seed, replication));
  NetworkDataset out = sk;

  for (size_t d = 0; d < sk.designs.size(); ++d) {
    const Design& dz = sk.designs[d];
    const int cd = dz.contrast_count();
    const MatrixXd pat = ones_halves(cd);

    // Basic-parameter loadings of this design's contrasts.
    MatrixXd z = MatrixXd::Zero(cd, c);
    const int base = sk.treatment_index(dz.baseline());
    for (int j = 0; j < cd; ++j) {
      z(j, sk.treatment_index(dz.treatments[j + 1]) - 1) += 1.0;
      if (base != 0) z(j, base - 1) -= 1.0;
    }

    const VectorXd shift_design = rng.mvn_zero(kron(pat, sc.truth.sigma_omega));

    for (int si : sk.design_studies[d]) {
      Study& st = out.studies[si];
      const VectorXd shift_study = rng.mvn_zero(kron(pat, sc.truth.sigma_beta));
      const VectorXd noise = rng.mvn_zero(st.within_cov);

      for (int j = 0; j < cd; ++j) {
        for (int k = 0; k < p; ++k) {
          double mean = 0.0;
          for (int l = 0; l < c; ++l) mean += z(j, l) * sc.truth.delta(k * c + l);
          st.effects(j, k) = mean + shift_study(j * p + k) + shift_design(j * p + k) +
                             noise(j * p + k);
        }
      }

      if (sc.missing_prob > 0.0) {
        BoolMask extra = BoolMask::Constant(cd, p, false);
        bool all_masked = true;
        for (int j = 0; j < cd; ++j)
          for (int k = 0; k < p; ++k) {
            extra(j, k) = rng.uniform() < sc.missing_prob;
            if (!(st.missing(j, k) || extra(j, k))) all_masked = false;
          }
        // Never blank a study completely; drop the extra mask instead.
        if (!all_masked)
          for (int j = 0; j < cd; ++j)
            for (int k = 0; k < p; ++k) st.missing(j, k) = st.missing(j, k) || extra(j, k);
      }

      // Zero out whatever ended up missing so the stored study stays in the
      // canonical form validation produces.
      for (int j = 0; j < cd; ++j) {
        for (int k = 0; k < p; ++k) {
          if (!st.missing(j, k)) continue;
          st.effects(j, k) = 0.0;
          st.within_cov.row(j * p + k).setZero();
          st.within_cov.col(j * p + k).setZero();
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Univariate network reference fit
// ---------------------------------------------------------------------------

UnivariateFit univariate_dl_network(const NetworkDataset& ds) {
  if (!ds.canonical)
    throw std::invalid_argument("univariate_dl_network requires a canonical dataset");
  if (ds.num_outcomes() != 1)
    throw std::invalid_argument("univariate_dl_network handles a single outcome");
  for (const Study& s : ds.studies)
    if (s.missing.any())
      throw std::invalid_argument("univariate_dl_network requires complete data");

  const int n = ds.total_contrasts();
  const int c = ds.basic_parameters();

  std::vector<int> offset(ds.studies.size() + 1, 0);
  for (size_t i = 0; i < ds.studies.size(); ++i)
    offset[i + 1] = offset[i] + ds.studies[i].contrast_count();

  VectorXd y(n);
  MatrixXd s = MatrixXd::Zero(n, n);
  MatrixXd w = MatrixXd::Zero(n, n);
  MatrixXd z = MatrixXd::Zero(n, c);
  for (size_t i = 0; i < ds.studies.size(); ++i) {
    const Study& st = ds.studies[i];
    const int cd = st.contrast_count();
    for (int j = 0; j < cd; ++j) y(offset[i] + j) = st.effects(j, 0);
    s.block(offset[i], offset[i], cd, cd) = st.within_cov;
    w.block(offset[i], offset[i], cd, cd) = st.within_cov.inverse();
    const int base = ds.treatment_index(st.design.baseline());
    for (int j = 0; j < cd; ++j) {
      z(offset[i] + j, ds.treatment_index(st.design.treatments[j + 1]) - 1) += 1.0;
      if (base != 0) z(offset[i] + j, base - 1) -= 1.0;
    }
  }

  MatrixXd m1 = MatrixXd::Zero(n, n);
  MatrixXd m2 = MatrixXd::Zero(n, n);
  for (size_t i = 0; i < ds.studies.size(); ++i) {
    const int cd = ds.studies[i].contrast_count();
    m1.block(offset[i], offset[i], cd, cd) = ones_halves(cd);
  }
  for (size_t d = 0; d < ds.designs.size(); ++d) {
    for (int si : ds.design_studies[d]) {
      for (int sj : ds.design_studies[d]) {
        const int cd = ds.studies[si].contrast_count();
        for (int a = 0; a < cd; ++a)
          for (int b = 0; b < cd; ++b)
            m2(offset[si] + a, offset[sj] + b) = (a == b) ? 1.0 : 0.5;
      }
    }
  }

  UnivariateFit fit;

  // Global residual quadratic form and its expectation coefficients.
  const MatrixXd gi = (z.transpose() * w * z).inverse();
  const MatrixXd h = z * gi * z.transpose() * w;
  const MatrixXd f = w * (MatrixXd::Identity(n, n) - h);
  fit.q_global = y.dot(f * y);
  const double coef_beta = (f * m1).trace();
  const double coef_omega = (f * m2).trace();
  const double cst = static_cast<double>(n) - h.trace();

  // Design-level fits regress each design's rows on its own contrast means.
  double q_sum = 0.0, coef_sum = 0.0, cst_sum = 0.0;
  int first = 0;
  for (size_t d = 0; d < ds.designs.size(); ++d) {
    const int cd = ds.designs[d].contrast_count();
    const int nd = cd * static_cast<int>(ds.design_studies[d].size());

    MatrixXd xd = MatrixXd::Zero(nd, cd);
    for (int i = 0; i * cd < nd; ++i)
      xd.block(i * cd, 0, cd, cd) = MatrixXd::Identity(cd, cd);
    const MatrixXd wd = w.block(first, first, nd, nd);
    const VectorXd yd = y.segment(first, nd);
    const MatrixXd hd = xd * (xd.transpose() * wd * xd).inverse() * xd.transpose() * wd;
    const MatrixXd fd = wd * (MatrixXd::Identity(nd, nd) - hd);

    const double qd = yd.dot(fd * yd);
    fit.q_designs.push_back(qd);
    q_sum += qd;
    coef_sum += (fd * m1.block(first, first, nd, nd)).trace();
    cst_sum += static_cast<double>(nd) - hd.trace();
    first += nd;
  }

  fit.tau_beta2_raw = (q_sum - cst_sum) / coef_sum;
  fit.tau_beta2 = std::max(0.0, fit.tau_beta2_raw);

  fit.omega_estimated = std::abs(coef_omega) > 1e-9 * n;
  if (fit.omega_estimated) {
    fit.tau_omega2_raw = (fit.q_global - coef_beta * fit.tau_beta2 - cst) / coef_omega;
    fit.tau_omega2 = std::max(0.0, fit.tau_omega2_raw);
  }

  const MatrixXd v = fit.tau_beta2 * m1 + fit.tau_omega2 * m2 + s;
  const MatrixXd vi = v.llt().solve(MatrixXd::Identity(n, n));
  fit.var_delta = (z.transpose() * vi * z).inverse();
  fit.delta = fit.var_delta * (z.transpose() * (vi * y));
  return fit;
}

PairwiseFit pairwise_dl(const VectorXd& y, const VectorXd& v) {
  if (y.size() != v.size() || y.size() < 2)
    throw std::invalid_argument("pairwise_dl needs at least two studies");
  if (v.minCoeff() <= 0.0)
    throw std::invalid_argument("pairwise_dl: variances must be positive");

  PairwiseFit fit;
  const VectorXd w = v.cwiseInverse();
  const double sw = w.sum();
  const double mu_fixed = w.dot(y) / sw;
  fit.q = (w.array() * (y.array() - mu_fixed).square()).sum();
  const double denom = sw - w.squaredNorm() / sw;
  const double dof = static_cast<double>(y.size()) - 1.0;
  fit.tau2_raw = (fit.q - dof) / denom;
  fit.tau2 = std::max(0.0, fit.tau2_raw);

  const VectorXd wstar = (v.array() + fit.tau2).inverse();
  fit.mu = wstar.dot(y) / wstar.sum();
  fit.var_mu = 1.0 / wstar.sum();
  return fit;
}

// ---------------------------------------------------------------------------
// Two-arm multivariate reference fit
// ---------------------------------------------------------------------------

MetaRegressionFit multivariate_metareg_mom(const NetworkDataset& ds) {
  if (!ds.canonical)
    throw std::invalid_argument("multivariate_metareg_mom requires a canonical dataset");
  for (const Study& s : ds.studies)
    if (s.contrast_count() != 1)
      throw std::invalid_argument("multivariate_metareg_mom handles two-arm studies only");

  const int nstud = ds.num_studies();
  const int p = ds.num_outcomes();
  const int c = ds.basic_parameters();
  const int rows = nstud * p;

  VectorXd y = VectorXd::Zero(rows);
  MatrixXd w = MatrixXd::Zero(rows, rows);
  MatrixXd r = MatrixXd::Zero(rows, rows);
  MatrixXd x = MatrixXd::Zero(rows, p * c);

  for (int i = 0; i < nstud; ++i) {
    const Study& st = ds.studies[i];
    std::vector<int> obs;
    for (int k = 0; k < p; ++k) {
      if (st.missing(0, k)) continue;
      obs.push_back(k);
      y(i * p + k) = st.effects(0, k);
      r(i * p + k, i * p + k) = 1.0;
    }
    MatrixXd sub(obs.size(), obs.size());
    for (size_t a = 0; a < obs.size(); ++a)
      for (size_t b = 0; b < obs.size(); ++b) sub(a, b) = st.within_cov(obs[a], obs[b]);
    const MatrixXd inv = sub.inverse();
    for (size_t a = 0; a < obs.size(); ++a)
      for (size_t b = 0; b < obs.size(); ++b) w(i * p + obs[a], i * p + obs[b]) = inv(a, b);

    const int base = ds.treatment_index(st.design.baseline());
    const int treat = ds.treatment_index(st.design.treatments[1]);
    for (int k = 0; k < p; ++k) {
      x(i * p + k, k * c + treat - 1) += 1.0;
      if (base != 0) x(i * p + k, k * c + base - 1) -= 1.0;
    }
  }

  const MatrixXd g = x.transpose() * w * x;
  Eigen::FullPivLU<MatrixXd> lu(g);
  if (!lu.isInvertible())
    throw std::invalid_argument("multivariate_metareg_mom: singular normal equations");
  const MatrixXd h = x * lu.inverse() * x.transpose() * w;
  const MatrixXd ident = MatrixXd::Identity(rows, rows);
  const MatrixXd a = w * (ident - h);
  const MatrixXd b = (ident - h).transpose() * r;

  const VectorXd resid = y - h * y;
  const VectorXd wu = w * resid;
  const VectorXd ru = r * resid;
  MatrixXd btr_q = MatrixXd::Zero(p, p);
  MatrixXd btr_b = MatrixXd::Zero(p, p);
  for (int i = 0; i < nstud; ++i) {
    btr_q += wu.segment(i * p, p) * ru.segment(i * p, p).transpose();
    btr_b += b.block(i * p, i * p, p, p);
  }

  MatrixXd coeff = MatrixXd::Zero(p * p, p * p);
  for (int i = 0; i < nstud; ++i)
    for (int k = 0; k < nstud; ++k)
      coeff += kron(b.block(i * p, k * p, p, p).transpose(), a.block(k * p, i * p, p, p));

  Eigen::FullPivLU<MatrixXd> clu(coeff);
  if (!clu.isInvertible())
    throw std::invalid_argument("multivariate_metareg_mom: singular moment equations");
  const VectorXd sol = clu.solve(vec(btr_q) - vec(btr_b));

  MetaRegressionFit fit;
  fit.sigma_beta_raw = unvec(sol, p, p);
  fit.sigma_beta = truncate_psd(symmetrize(fit.sigma_beta_raw)).matrix;
  return fit;
}

}  // namespace netmeta
