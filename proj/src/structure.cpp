#include "netmeta/structure.hpp"

#include "netmeta/errors.hpp"
#include "netmeta/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <stdexcept>
#include <string>

namespace netmeta {

MatrixXd build_p_matrix(int contrast_count) {
  if (contrast_count <= 0) throw std::invalid_argument("contrast count must be positive");
  MatrixXd p = MatrixXd::Constant(contrast_count, contrast_count, 0.5);
  p.diagonal().setOnes();
  return p;
}

MatrixXd build_contrast_rows(const Design& design,
                             const std::vector<std::string>& network_treatments) {
  auto index_of = [&](const std::string& t) {
    for (size_t i = 0; i < network_treatments.size(); ++i)
      if (network_treatments[i] == t) return static_cast<int>(i);
    throw std::out_of_range("treatment '" + t + "' is not in the network");
  };

  const int c = static_cast<int>(network_treatments.size()) - 1;
  MatrixXd z = MatrixXd::Zero(design.contrast_count(), c);
  const int base = index_of(design.baseline());
  for (int j = 0; j < design.contrast_count(); ++j) {
    const int t = index_of(design.treatments[j + 1]);
    // Basic parameter l is the effect of treatment l+1 against the reference.
    z(j, t - 1) += 1.0;
    if (base != 0) z(j, base - 1) -= 1.0;
  }
  return z;
}

std::pair<MatrixXd, MatrixXd> build_m_matrices(const NetworkDataset& ds) {
  if (!ds.canonical)
    throw std::invalid_argument("build_m_matrices requires a canonical dataset");
  const int n = ds.total_contrasts();
  MatrixXd m1 = MatrixXd::Zero(n, n);
  MatrixXd m2 = MatrixXd::Zero(n, n);

  // Global contrast offsets study by study, in stored order.
  std::vector<int> offset(ds.studies.size() + 1, 0);
  for (size_t i = 0; i < ds.studies.size(); ++i)
    offset[i + 1] = offset[i] + ds.studies[i].contrast_count();

  for (size_t i = 0; i < ds.studies.size(); ++i) {
    const int c = ds.studies[i].contrast_count();
    m1.block(offset[i], offset[i], c, c) = build_p_matrix(c);
  }

  for (size_t d = 0; d < ds.designs.size(); ++d) {
    const auto& members = ds.design_studies[d];
    for (int si : members) {
      for (int sj : members) {
        const int ci = ds.studies[si].contrast_count();
        for (int a = 0; a < ci; ++a)
          for (int b = 0; b < ci; ++b)
            m2(offset[si] + a, offset[sj] + b) = (a == b) ? 1.0 : 0.5;
      }
    }
  }
  return {m1, m2};
}

MatrixXd build_precision_matrix(const MatrixXd& s, const std::vector<bool>& observed,
                                const std::vector<int>& block_sizes, const char* what) {
  const Eigen::Index m = s.rows();
  if (s.cols() != m) throw std::invalid_argument("covariance must be square");
  if (static_cast<Eigen::Index>(observed.size()) != m)
    throw std::invalid_argument("observedness mask does not match the covariance");
  Eigen::Index total = 0;
  for (int b : block_sizes) total += b;
  if (total != m) throw std::invalid_argument("block sizes do not partition the covariance");

  MatrixXd w = MatrixXd::Zero(m, m);
  Eigen::Index start = 0;
  for (int b : block_sizes) {
    std::vector<Eigen::Index> obs;
    for (Eigen::Index i = start; i < start + b; ++i)
      if (observed[i]) obs.push_back(i);
    if (!obs.empty()) {
      MatrixXd sub(obs.size(), obs.size());
      for (size_t r = 0; r < obs.size(); ++r)
        for (size_t c = 0; c < obs.size(); ++c) sub(r, c) = s(obs[r], obs[c]);
      MatrixXd inv = spd_inverse(sub, what);
      for (size_t r = 0; r < obs.size(); ++r)
        for (size_t c = 0; c < obs.size(); ++c) w(obs[r], obs[c]) = inv(r, c);
    }
    start += b;
  }
  return w;
}

StructuralMatrices build_structural(const NetworkDataset& ds, const BuildOptions& opts) {
  if (!ds.canonical)
    throw std::invalid_argument("build_structural requires a canonical dataset");

  StructuralMatrices sm;
  sm.p = ds.num_outcomes();
  sm.c = ds.basic_parameters();
  sm.n = ds.total_contrasts();
  sm.placeholder = opts.missing_placeholder;
  const int p = sm.p;
  const int np = sm.n * p;

  sm.Y = VectorXd::Zero(np);
  sm.S = MatrixXd::Zero(np, np);
  sm.R = MatrixXd::Zero(np, np);
  sm.Z = MatrixXd::Zero(sm.n, sm.c);

  std::vector<bool> observed(np, false);
  std::vector<int> study_blocks;
  study_blocks.reserve(ds.studies.size());

  std::vector<int> offset(ds.studies.size() + 1, 0);
  for (size_t i = 0; i < ds.studies.size(); ++i)
    offset[i + 1] = offset[i] + ds.studies[i].contrast_count();

  for (size_t i = 0; i < ds.studies.size(); ++i) {
    const Study& st = ds.studies[i];
    const int c_d = st.contrast_count();
    const int row0 = offset[i] * p;
    study_blocks.push_back(c_d * p);

    for (int j = 0; j < c_d; ++j) {
      for (int k = 0; k < p; ++k) {
        const int r = row0 + j * p + k;
        if (st.missing(j, k)) {
          sm.Y(r) = opts.missing_placeholder;
        } else {
          sm.Y(r) = st.effects(j, k);
          sm.R(r, r) = 1.0;
          observed[r] = true;
        }
      }
    }
    sm.S.block(row0, row0, c_d * p, c_d * p) = st.within_cov;
    sm.Z.block(offset[i], 0, c_d, sm.c) = build_contrast_rows(st.design, ds.treatments);
  }

  sm.W = build_precision_matrix(sm.S, observed, study_blocks);
  std::tie(sm.M1, sm.M2) = build_m_matrices(ds);

  sm.X = MatrixXd::Zero(np, p * sm.c);
  for (int i = 0; i < sm.n; ++i)
    for (int k = 0; k < p; ++k)
      for (int l = 0; l < sm.c; ++l) sm.X(i * p + k, k * sm.c + l) = sm.Z(i, l);

  // Per-design views. Studies of a design are contiguous after
  // canonicalization, so each design owns one contrast row range.
  int first = 0;
  for (size_t d = 0; d < ds.designs.size(); ++d) {
    StructuralMatrices::DesignBlock blk;
    blk.design = static_cast<int>(d);
    blk.first_contrast = first;
    blk.c_d = ds.designs[d].contrast_count();
    blk.N_d = static_cast<int>(ds.design_studies[d].size());
    blk.n_d = blk.c_d * blk.N_d;

    const int r0 = first * p;
    const int len = blk.n_d * p;
    blk.Y_d = sm.Y.segment(r0, len);
    blk.S_d = sm.S.block(r0, r0, len, len);
    blk.W_d = sm.W.block(r0, r0, len, len);
    blk.R_d = sm.R.block(r0, r0, len, len);
    blk.M1_d = sm.M1.block(first, first, blk.n_d, blk.n_d);
    // The design-level regression has one mean parameter per component of a
    // member study, so X_d stacks one identity block per study.
    blk.X_d = MatrixXd::Zero(len, blk.c_d * p);
    for (int s = 0; s < blk.N_d; ++s)
      blk.X_d.block(s * blk.c_d * p, 0, blk.c_d * p, blk.c_d * p) =
          MatrixXd::Identity(blk.c_d * p, blk.c_d * p);

    first += blk.n_d;
    sm.per_design.push_back(std::move(blk));
  }
  return sm;
}

}  // namespace netmeta
