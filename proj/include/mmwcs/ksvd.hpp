// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mmwcs/dictionary.hpp"
#include "mmwcs/pursuit.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <numeric>
#include <vector>

namespace mmwcs {

/// |d_i^H d_j| above which two unit atoms count as the same atom.
inline constexpr double kDuplicateAtom = 0.99;

struct KsvdOptions {
  int atoms = 0;          // r
  int sparsity = 1;       // OMP atoms per sample
  int iterations = 1;
  const CMat* initial = nullptr;  // optional n x r starting dictionary
};

struct KsvdReport {
  double initial_error = 0.0;  // ||H - D0 Z0||_F with Z0 coded against the start dictionary
  double final_error = 0.0;    // after the last atom update
  int replaced_atoms = 0;
  bool fewer_samples_than_atoms = false;
};

namespace detail {

inline CMat sparse_code(const CMat& d, const CMat& h, int sparsity) {
  const DenseOperator op(d);
  OmpOptions opts;
  opts.max_iters = sparsity;
  opts.residual_tol = 1e-12;
  opts.normalize_columns = false;  // atoms are unit-norm
  CMat z = CMat::Zero(d.cols(), h.cols());
  for (Index j = 0; j < h.cols(); ++j) {
    const OmpTrace t = omp_core(op, h.col(j), opts);
    for (std::size_t k = 0; k < t.estimate.support.size(); ++k)
      z(t.estimate.support[k], j) = t.estimate.coeffs[k];
  }
  return z;
}

}  // namespace detail

/// K-SVD: OMP sparse coding against the current dictionary followed by a rank-1
/// SVD update of each atom on the residual restricted to the samples using it.
/// Atoms nobody uses are replaced by the currently worst-represented sample.
/// The default start dictionary is r distinct data columns (normalized) chosen
/// by `rng`, padded with Gaussian atoms when there are fewer samples than atoms.
inline LearnedDictionary ksvd(const CMat& h, const KsvdOptions& opts, Rng& rng,
                              KsvdReport* report = nullptr) {
  require(h.rows() > 0 && h.cols() > 0, "ksvd: empty data matrix");
  require(opts.atoms >= 1, "ksvd: atom count must be >= 1");
  require(opts.sparsity >= 1, "ksvd: sparsity must be >= 1");
  require(opts.iterations >= 1, "ksvd: iterations must be >= 1");
  const Index n = h.rows();
  const Index m = h.cols();
  const Index r = opts.atoms;
  KsvdReport rep;
  rep.fewer_samples_than_atoms = m < r;

  CMat d(n, r);
  if (opts.initial) {
    require_dims(opts.initial->rows() == n && opts.initial->cols() == r, "ksvd: bad initial dictionary");
    d = *opts.initial;
  } else {
    std::vector<Index> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), Index{0});
    std::shuffle(cols.begin(), cols.end(), rng);
    // Skip samples nearly collinear with an atom already taken.
    Index filled = 0;
    for (Index c : cols) {
      if (filled == r) break;
      if (h.col(c).norm() <= 0.0) continue;
      const CVec a = h.col(c).normalized();
      if (filled > 0 && (d.leftCols(filled).adjoint() * a).cwiseAbs().maxCoeff() > kDuplicateAtom) continue;
      d.col(filled++) = a;
    }
    for (; filled < r; ++filled) d.col(filled) = complex_normal_vector(rng, n);
  }
  for (Index j = 0; j < r; ++j) d.col(j).normalize();

  CMat z;
  for (int it = 0; it < opts.iterations; ++it) {
    z = detail::sparse_code(d, h, opts.sparsity);
    CMat resid = h - d * z;
    if (it == 0) rep.initial_error = resid.norm();
    RVec err = resid.colwise().squaredNorm().transpose();

    for (Index j = 0; j < r; ++j) {
      std::vector<Index> omega;
      for (Index s = 0; s < m; ++s)
        if (z(j, s) != cdouble(0.0, 0.0)) omega.push_back(s);

      // An atom duplicating an earlier one is treated as unused: its samples
      // go back to the residual and the atom is re-seeded below.
      if (j > 0 && (d.leftCols(j).adjoint() * d.col(j)).cwiseAbs().maxCoeff() > kDuplicateAtom) {
        for (Index s : omega) {
          resid.col(s) += d.col(j) * z(j, s);
          z(j, s) = 0.0;
          err(s) = resid.col(s).squaredNorm();
        }
        omega.clear();
      }

      if (omega.empty()) {
        Index worst = 0;
        err.maxCoeff(&worst);
        if (err(worst) <= 0.0) continue;
        d.col(j) = h.col(worst).normalized();
        ++rep.replaced_atoms;
        // Samples now explained by the new atom no longer count as unrepresented.
        for (Index s = 0; s < m; ++s) {
          const double left = h.col(s).squaredNorm() - std::norm(d.col(j).dot(h.col(s)));
          err(s) = std::min(err(s), std::max(left, 0.0));
        }
        continue;
      }

      CMat e(n, Index(omega.size()));
      for (std::size_t k = 0; k < omega.size(); ++k)
        e.col(Index(k)) = resid.col(omega[k]) + d.col(j) * z(j, omega[k]);
      Eigen::JacobiSVD<CMat> svd(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
      d.col(j) = svd.matrixU().col(0);
      const CVec coef = svd.singularValues()(0) * svd.matrixV().col(0).conjugate();
      for (std::size_t k = 0; k < omega.size(); ++k) {
        z(j, omega[k]) = coef(Index(k));
        resid.col(omega[k]) = e.col(Index(k)) - d.col(j) * coef(Index(k));
      }
    }
    rep.final_error = (h - d * z).norm();
  }
  for (Index j = 0; j < r; ++j) d.col(j).normalize();
  if (report) *report = rep;
  return {d, DictMethod::ksvd, opts.sparsity, opts.iterations, 0};
}

}  // namespace mmwcs
