// SPDX-License-Identifier: Apache-2.0
#pragma once

// Effective sensing operators A = Phi Psi for the pursuit algorithms.

#include "mmwcs/dictionary.hpp"
#include "mmwcs/measurement.hpp"
#include "mmwcs/types.hpp"

#include <concepts>
#include <vector>

namespace mmwcs {

template <class Op>
concept SensingOperator = requires(const Op& op, const CVec& v, Index j) {
  { op.rows() } -> std::convertible_to<Index>;
  { op.cols() } -> std::convertible_to<Index>;
  { op.forward(v) } -> std::convertible_to<CVec>;
  { op.adjoint(v) } -> std::convertible_to<CVec>;
  { op.column(j) } -> std::convertible_to<CVec>;
  { op.column_norms() } -> std::convertible_to<RVec>;
};

class DenseOperator {
 public:
  explicit DenseOperator(CMat a) : a_(std::move(a)) {}

  Index rows() const { return a_.rows(); }
  Index cols() const { return a_.cols(); }
  CVec forward(const CVec& z) const { return a_ * z; }
  CVec adjoint(const CVec& r) const { return a_.adjoint() * r; }
  CVec column(Index j) const { return a_.col(j); }
  RVec column_norms() const { return a_.colwise().norm().transpose(); }
  const CMat& matrix() const { return a_; }

 private:
  CMat a_;
};

/// Phi D for a dense (learned) dictionary, built column by column through the
/// factored sensing matrix.
inline DenseOperator make_operator(const SensingMatrix& phi, const CMat& d) {
  require_dims(d.rows() == phi.cols(), "dictionary rows do not match channel size");
  CMat a(phi.rows(), d.cols());
  for (Index j = 0; j < d.cols(); ++j) a.col(j) = phi.apply(d.col(j));
  return DenseOperator(std::move(a));
}

inline DenseOperator make_operator(const SensingMatrix& phi, const LearnedDictionary& d) {
  return make_operator(phi, d.d);
}

/// Phi Psi for the grid dictionary. Block i maps Z to L_i Z R_i with
/// L_i = U_i^H P_R and R_i = P_T^H V_i, so atom (r, t) of block i is the outer
/// product L_i(:, r) R_i(t, :).
class GridSensingOperator {
 public:
  GridSensingOperator(const GridDictionary& dict, const SensingMatrix& phi)
      : n_rx_(dict.grid().rx_count()), n_tx_(dict.grid().tx_count()) {
    require_dims(phi.n_ue() == dict.rx_steering().rows() && phi.n_gnb() == dict.tx_steering().rows(),
                 "sensing matrix does not match dictionary arrays");
    for (const auto& b : phi.blocks()) {
      left_.push_back(b.ue.adjoint() * dict.rx_steering());
      right_.push_back(dict.tx_steering().adjoint() * b.gnb);
    }
    rows_ = phi.rows();
  }

  Index rows() const { return rows_; }
  Index cols() const { return n_rx_ * n_tx_; }

  CVec forward(const CVec& z) const {
    require_dims(z.size() == cols(), "operator forward: length mismatch");
    const Eigen::Map<const CMat> zm(z.data(), n_rx_, n_tx_);
    CVec out(rows_);
    Index off = 0;
    for (std::size_t i = 0; i < left_.size(); ++i) {
      const CMat y = left_[i] * zm * right_[i];
      out.segment(off, y.size()) = Eigen::Map<const CVec>(y.data(), y.size());
      off += y.size();
    }
    return out;
  }

  CVec adjoint(const CVec& r) const {
    require_dims(r.size() == rows_, "operator adjoint: length mismatch");
    CMat acc = CMat::Zero(n_rx_, n_tx_);
    Index off = 0;
    for (std::size_t i = 0; i < left_.size(); ++i) {
      const Eigen::Map<const CMat> y(r.data() + off, left_[i].rows(), right_[i].cols());
      acc.noalias() += left_[i].adjoint() * (y * right_[i].adjoint());
      off += y.size();
    }
    return vec(acc);
  }

  CVec column(Index j) const {
    const Index r = j % n_rx_;
    const Index t = j / n_rx_;
    CVec out(rows_);
    Index off = 0;
    for (std::size_t i = 0; i < left_.size(); ++i) {
      const CMat y = left_[i].col(r) * right_[i].row(t);
      out.segment(off, y.size()) = Eigen::Map<const CVec>(y.data(), y.size());
      off += y.size();
    }
    return out;
  }

  RVec column_norms() const {
    RMat nl(Index(left_.size()), n_rx_);
    RMat nr(Index(left_.size()), n_tx_);
    for (std::size_t i = 0; i < left_.size(); ++i) {
      nl.row(Index(i)) = left_[i].colwise().squaredNorm();
      nr.row(Index(i)) = right_[i].rowwise().squaredNorm().transpose();
    }
    const RMat sq = nl.transpose() * nr;
    return Eigen::Map<const RVec>(sq.data(), sq.size()).cwiseSqrt();
  }

 private:
  Index n_rx_;
  Index n_tx_;
  Index rows_ = 0;
  std::vector<CMat> left_;
  std::vector<CMat> right_;
};

inline GridSensingOperator make_operator(const SensingMatrix& phi, const GridDictionary& d) {
  return GridSensingOperator(d, phi);
}

/// Largest eigenvalue of A^H A (the ISTA Lipschitz constant) by power iteration
/// from a fixed start vector.
template <SensingOperator Op>
double lipschitz_estimate(const Op& op, int iterations = 30) {
  Rng rng(0x5eed);
  CVec v = complex_normal_vector(rng, op.cols());
  v.normalize();
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    CVec w = op.adjoint(op.forward(v));
    lambda = std::real(v.dot(w));
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    v = w / n;
  }
  return lambda;
}

}  // namespace mmwcs
