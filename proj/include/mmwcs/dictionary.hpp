// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mmwcs/channel_model.hpp"
#include "mmwcs/grid.hpp"
#include "mmwcs/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace mmwcs {

/// Psi = conj(P_T) (x) P_R over an AngularGrid, never materialized. Only the
/// per-side steering matrices P_R (N_UEant x rx points) and P_T (N_NBant x tx
/// points) are stored; atoms are built on demand.
class GridDictionary {
 public:
  GridDictionary(AngularGrid grid, ArrayGeometry rx, ArrayGeometry tx)
      : grid_(grid), rx_(rx), tx_(tx) {
    grid_.validate();
    p_r_.resize(rx_.element_count(), grid_.rx_count());
    for (int e = 0; e < grid_.ue_elev.count; ++e)
      for (int a = 0; a < grid_.ue_azi.count; ++a)
        p_r_.col(grid_.rx_index(a, e)) =
            steering_vector(rx_, grid_.ue_azi.point(a), grid_.ue_elev.point(e));
    p_t_.resize(tx_.element_count(), grid_.tx_count());
    for (int e = 0; e < grid_.nb_elev.count; ++e)
      for (int a = 0; a < grid_.nb_azi.count; ++a)
        p_t_.col(grid_.tx_index(a, e)) =
            steering_vector(tx_, grid_.nb_azi.point(a), grid_.nb_elev.point(e));
  }

  const AngularGrid& grid() const { return grid_; }
  const ArrayGeometry& rx_geometry() const { return rx_; }
  const ArrayGeometry& tx_geometry() const { return tx_; }
  const CMat& rx_steering() const { return p_r_; }
  const CMat& tx_steering() const { return p_t_; }

  Index rows() const { return p_r_.rows() * p_t_.rows(); }
  Index cols() const { return grid_.atom_count(); }

  CVec atom(Index index) const {
    if (index < 0 || index >= cols()) throw std::out_of_range("atom index out of range");
    const Index r = index % grid_.rx_count();
    const Index t = index / grid_.rx_count();
    return vec(p_r_.col(r) * p_t_.col(t).adjoint());
  }

  /// Psi z = vec(P_R Z P_T^H), Z = unvec(z) of shape rx points x tx points.
  CVec apply(const CVec& z) const {
    require_dims(z.size() == cols(), "apply_dict: length mismatch");
    const Eigen::Map<const CMat> zm(z.data(), grid_.rx_count(), grid_.tx_count());
    return vec(p_r_ * zm * p_t_.adjoint());
  }

  /// Psi^H h = vec(P_R^H H P_T).
  CVec apply_adjoint(const CVec& h) const {
    require_dims(h.size() == rows(), "apply_dict_adj: length mismatch");
    const Eigen::Map<const CMat> hm(h.data(), p_r_.rows(), p_t_.rows());
    return vec(p_r_.adjoint() * hm * p_t_);
  }

  /// Dense Psi for small oracle checks.
  CMat dense() const { return kron(p_t_.conjugate(), p_r_); }

 private:
  AngularGrid grid_;
  ArrayGeometry rx_;
  ArrayGeometry tx_;
  CMat p_r_;
  CMat p_t_;
};

inline CVec apply_dict(const GridDictionary& d, const CVec& z) { return d.apply(z); }
inline CVec apply_dict_adj(const GridDictionary& d, const CVec& h) { return d.apply_adjoint(h); }

enum class DictMethod { spca, ksvd, random };

inline std::string to_string(DictMethod m) {
  switch (m) {
    case DictMethod::spca: return "spca";
    case DictMethod::ksvd: return "ksvd";
    case DictMethod::random: return "random";
  }
  return "unknown";
}

inline DictMethod dict_method_from_string(const std::string& s) {
  if (s == "spca") return DictMethod::spca;
  if (s == "ksvd") return DictMethod::ksvd;
  if (s == "random") return DictMethod::random;
  throw std::invalid_argument("unknown dictionary method: " + s);
}

struct LearnedDictionary {
  CMat d;  // n x r, one atom per column
  DictMethod method = DictMethod::spca;
  int sparsity = 0;
  int iterations = 0;
  std::uint64_t seed = 0;

  Index rows() const { return d.rows(); }
  Index cols() const { return d.cols(); }
  CVec atom(Index j) const { return d.col(j); }
  CVec apply(const CVec& z) const { return d * z; }
  CVec apply_adjoint(const CVec& h) const { return d.adjoint() * h; }
};

/// Keeps the s largest-magnitude entries of each column; ties keep the lower row.
inline CMat hard_threshold(const CMat& x, int s) {
  require(s >= 0, "hard_threshold: s must be >= 0");
  if (s >= x.rows()) return x;
  CMat out = CMat::Zero(x.rows(), x.cols());
  if (s == 0) return out;
  std::vector<Index> order(std::size_t(x.rows()));
  std::vector<double> mag(std::size_t(x.rows()));
  for (Index j = 0; j < x.cols(); ++j) {
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = 0; i < x.rows(); ++i) mag[std::size_t(i)] = std::abs(x(i, j));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return mag[std::size_t(a)] > mag[std::size_t(b)]; });
    for (int k = 0; k < s; ++k) out(order[std::size_t(k)], j) = x(order[std::size_t(k)], j);
  }
  return out;
}

/// Per-column sparsity keeping the top 10% of r coefficients (at least one).
inline int spca_default_sparsity(Index r) {
  return std::max(1, static_cast<int>(std::ceil(0.1 * double(r))));
}

/// Per-iteration diagnostics of spca_iht.
struct SpcaTrace {
  std::vector<double> orthogonality_error;  // ||D^H D - I||_F after each dictionary step
  std::vector<double> objective_after_d;    // ||H - D Z||_F^2 after the dictionary step
  std::vector<double> objective_after_z;    // ... and after the thresholding step
  std::vector<double> reconstruction_error; // ||H - D H_s[D^H H]||_F after iteration i
};

/// Iterative hard-thresholding sparse PCA.
///
/// Alternates D <- U V^H from the SVD of H Z^H and Z <- H_s[D^H H], starting
/// from a standard complex Gaussian Z. The working dictionary has
/// min(n, m) orthonormal columns; when `atoms` is positive and smaller, the
/// returned dictionary keeps the columns carrying the most energy in the final
/// sparse code, strongest first.
inline LearnedDictionary spca_iht(const CMat& h, int iterations, int sparsity, Rng& rng,
                                  int atoms = -1, SpcaTrace* trace = nullptr) {
  require(h.rows() > 0 && h.cols() > 0, "spca_iht: empty data matrix");
  require(iterations >= 1, "spca_iht: iterations must be >= 1");
  require(sparsity >= 0, "spca_iht: sparsity must be >= 0");
  const Index r0 = std::min(h.rows(), h.cols());

  CMat z = complex_normal_matrix(rng, r0, h.cols());
  CMat d;
  for (int it = 0; it < iterations; ++it) {
    const CMat m = h * z.adjoint();
    Eigen::BDCSVD<CMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    d = svd.matrixU() * svd.matrixV().adjoint();
    if (trace) {
      trace->orthogonality_error.push_back(
          (d.adjoint() * d - CMat::Identity(r0, r0)).norm());
      trace->objective_after_d.push_back((h - d * z).squaredNorm());
    }
    z = hard_threshold(d.adjoint() * h, sparsity);
    if (trace) {
      const double obj = (h - d * z).squaredNorm();
      trace->objective_after_z.push_back(obj);
      trace->reconstruction_error.push_back(std::sqrt(obj));
    }
  }

  LearnedDictionary out{d, DictMethod::spca, sparsity, iterations, 0};
  if (atoms > 0 && atoms < r0) {
    const RVec energy = z.rowwise().squaredNorm();
    std::vector<Index> order(static_cast<std::size_t>(r0));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return energy(a) > energy(b); });
    out.d.resize(d.rows(), atoms);
    for (int k = 0; k < atoms; ++k) out.d.col(k) = d.col(order[std::size_t(k)]);
  }
  return out;
}

/// Random unit-norm atoms, used as an initialization for learned recovery.
inline LearnedDictionary random_dictionary(Index n, Index r, Rng& rng) {
  CMat d = complex_normal_matrix(rng, n, r);
  for (Index j = 0; j < r; ++j) d.col(j).normalize();
  return {d, DictMethod::random, 0, 0, 0};
}

}  // namespace mmwcs
