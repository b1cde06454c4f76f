// SPDX-License-Identifier: Apache-2.0
#pragma once

// Operator-generic sparse recovery: OMP and ISTA.

#include "mmwcs/operators.hpp"
#include "mmwcs/types.hpp"

#include <algorithm>
#include <vector>

namespace mmwcs {

struct SparseEstimate {
  std::vector<Index> support;
  std::vector<cdouble> coeffs;
  Index dim = 0;

  CVec dense() const {
    CVec z = CVec::Zero(dim);
    for (std::size_t k = 0; k < support.size(); ++k) z(support[k]) = coeffs[k];
    return z;
  }

  static SparseEstimate from_dense(const CVec& z) {
    SparseEstimate e;
    e.dim = z.size();
    for (Index i = 0; i < z.size(); ++i)
      if (z(i) != cdouble(0.0, 0.0)) {
        e.support.push_back(i);
        e.coeffs.push_back(z(i));
      }
    return e;
  }
};

enum class OmpCoefficients {
  least_squares,  // canonical OMP: projection onto the selected columns
  adjoint,        // x = (Phi Psi_S)^H y, the literal update
};

struct OmpOptions {
  int max_iters = 4;
  double residual_tol = 1e-6;  // stop once ||r|| <= tol * ||y||
  bool normalize_columns = true;
  OmpCoefficients coefficients = OmpCoefficients::least_squares;
};

struct OmpTrace {
  SparseEstimate estimate;
  std::vector<double> residual_norms;  // entry 0 is ||y||
  bool zero_measurement = false;
};

namespace detail {

/// Back substitution for the upper-triangular R of the incremental QR.
inline CVec solve_upper(const CMat& r, const CVec& b) {
  return r.triangularView<Eigen::Upper>().solve(b);
}

}  // namespace detail

/// Greedy pursuit over any SensingOperator. Selection uses |a_j^H r| / ||a_j||
/// when `normalize_columns` is set. In least-squares mode an atom is only
/// accepted if it strictly lowers the residual, so the residual trace is
/// non-increasing and no atom is selected twice.
template <SensingOperator Op>
OmpTrace omp_core(const Op& op, const CVec& y, const OmpOptions& opts = {}) {
  require_dims(y.size() == op.rows(), "omp: measurement length mismatch");
  OmpTrace out;
  out.estimate.dim = op.cols();
  const double y_norm = y.norm();
  out.residual_norms.push_back(y_norm);
  if (y_norm == 0.0) {
    out.zero_measurement = true;
    return out;
  }

  const RVec norms = opts.normalize_columns ? op.column_norms() : RVec::Ones(op.cols());
  const double norm_floor = 1e-12 * std::max(norms.maxCoeff(), 1e-300);
  std::vector<char> used(std::size_t(op.cols()), 0);

  const Index m = op.rows();
  CMat q(m, 0);
  CMat r_fac(0, 0);
  CMat selected(m, 0);
  CVec residual = y;
  CVec coeffs;

  for (int it = 0; it < opts.max_iters; ++it) {
    if (opts.coefficients == OmpCoefficients::least_squares && q.cols() >= m) break;
    const CVec corr = op.adjoint(residual);
    Index best = -1;
    double best_score = 0.0;
    for (Index j = 0; j < corr.size(); ++j) {
      if (used[std::size_t(j)] || norms(j) <= norm_floor) continue;
      const double score = std::abs(corr(j)) / norms(j);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0 || best_score <= 1e-14 * y_norm) break;
    const CVec a = op.column(best);

    if (opts.coefficients == OmpCoefficients::least_squares) {
      // Modified Gram-Schmidt with one reorthogonalization pass.
      CVec w = a;
      CVec proj = CVec::Zero(q.cols());
      for (int pass = 0; pass < 2; ++pass) {
        const CVec c = q.adjoint() * w;
        w -= q * c;
        proj += c;
      }
      const double wn = w.norm();
      if (wn <= 1e-12 * a.norm()) {
        used[std::size_t(best)] = 1;
        continue;
      }
      const CVec qn = w / wn;
      const CVec next = residual - qn * qn.dot(residual);
      if (!(next.norm() < residual.norm())) break;

      const Index k = q.cols();
      q.conservativeResize(m, k + 1);
      q.col(k) = qn;
      CMat grown = CMat::Zero(k + 1, k + 1);
      grown.topLeftCorner(k, k) = r_fac;
      grown.col(k).head(k) = proj;
      grown(k, k) = wn;
      r_fac = std::move(grown);
      selected.conservativeResize(m, k + 1);
      selected.col(k) = a;
      residual = next;
      coeffs = detail::solve_upper(r_fac, q.adjoint() * y);
    } else {
      const Index k = selected.cols();
      selected.conservativeResize(m, k + 1);
      selected.col(k) = a;
      coeffs = selected.adjoint() * y;
      residual = y - selected * coeffs;
    }
    used[std::size_t(best)] = 1;
    out.estimate.support.push_back(best);
    out.residual_norms.push_back(residual.norm());
    if (residual.norm() <= opts.residual_tol * y_norm) break;
  }

  out.estimate.coeffs.assign(coeffs.data(), coeffs.data() + coeffs.size());
  return out;
}

/// Complex soft threshold x * max(1 - theta/|x|, 0); real inputs reduce to
/// ReLU(x - theta) - ReLU(-x - theta).
inline cdouble soft_threshold(cdouble x, double theta) {
  require(theta >= 0.0, "soft_threshold: theta must be >= 0");
  const double mag = std::abs(x);
  if (mag <= theta) return {0.0, 0.0};
  return x * (1.0 - theta / mag);
}

inline CVec soft_threshold(const CVec& x, double theta) {
  CVec out(x.size());
  for (Index i = 0; i < x.size(); ++i) out(i) = soft_threshold(x(i), theta);
  return out;
}

struct IstaConfig {
  double step = 1.0;       // gamma
  double threshold = 0.0;  // theta
  int iterations = 10;     // K

  void validate() const {
    require(step > 0.0 && std::isfinite(step), "ista: step must be > 0");
    require(threshold >= 0.0 && std::isfinite(threshold), "ista: threshold must be >= 0");
    require(iterations >= 1, "ista: iterations must be >= 1");
  }
};

/// 0.5 ||y - A z||^2 + (theta / gamma) ||z||_1, the objective ISTA descends.
template <SensingOperator Op>
double lasso_objective(const Op& op, const CVec& y, const CVec& z, const IstaConfig& cfg) {
  return 0.5 * (y - op.forward(z)).squaredNorm() + cfg.threshold / cfg.step * z.cwiseAbs().sum();
}

struct IstaTrace {
  std::vector<double> objective;  // entry k is the objective after k iterations
};

/// K iterations of z <- eta_theta(z + gamma A^H (y - A z)) from z = 0.
template <SensingOperator Op>
CVec ista_core(const Op& op, const CVec& y, const IstaConfig& cfg, IstaTrace* trace = nullptr) {
  cfg.validate();
  require_dims(y.size() == op.rows(), "ista: measurement length mismatch");
  CVec z = CVec::Zero(op.cols());
  if (trace) trace->objective.push_back(lasso_objective(op, y, z, cfg));
  for (int k = 0; k < cfg.iterations; ++k) {
    const CVec r = y - op.forward(z);
    z = soft_threshold(z + cfg.step * op.adjoint(r), cfg.threshold);
    if (trace) trace->objective.push_back(lasso_objective(op, y, z, cfg));
  }
  return z;
}

}  // namespace mmwcs
