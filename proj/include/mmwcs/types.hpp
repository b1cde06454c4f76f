// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace mmwcs {

using cdouble = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Every stochastic routine takes one of these explicitly; nothing seeds itself.
using Rng = std::mt19937_64;

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin2db(double lin) { return 10.0 * std::log10(lin); }

/// Circularly-symmetric complex Gaussian sample with E|x|^2 = variance.
inline cdouble complex_normal(Rng& rng, double variance = 1.0) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

inline CMat complex_normal_matrix(Rng& rng, Index rows, Index cols, double variance = 1.0) {
  CMat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = complex_normal(rng, variance);
  return m;
}

inline CVec complex_normal_vector(Rng& rng, Index n, double variance = 1.0) {
  return complex_normal_matrix(rng, n, 1, variance);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw std::length_error(what);
}

/// Column-major vec() of a matrix.
inline CVec vec(const CMat& m) { return Eigen::Map<const CVec>(m.data(), m.size()); }

inline CMat unvec(const CVec& v, Index rows, Index cols) {
  require_dims(v.size() == rows * cols, "unvec: length does not match shape");
  return Eigen::Map<const CMat>(v.data(), rows, cols);
}

/// Kronecker product, used by tests and small dense oracles only.
inline CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace mmwcs
