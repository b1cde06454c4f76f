// SPDX-License-Identifier: Apache-2.0
#pragma once

// Beamformed measurements. A UE beam is a combiner U (N_UEant x N_UErf) applied
// as A = U^H; a gNB beam is a precoder V (N_NBant x N_NBrf) applied as B = V.
// One measurement is vec(A H B) = (B^T (x) A) vec(H).

#include "mmwcs/channel_model.hpp"
#include "mmwcs/types.hpp"

#include <algorithm>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

namespace mmwcs {

enum class Side { ue, gnb };

struct Codebook {
  std::vector<CVec> beams;
  int oversampling = 1;
  Side side = Side::gnb;

  std::size_t size() const { return beams.size(); }
  Index dim() const { return beams.empty() ? 0 : beams.front().size(); }
  const CVec& operator[](std::size_t i) const { return beams.at(i); }

  /// All beams as columns of one matrix.
  CMat matrix() const {
    CMat m(dim(), Index(size()));
    for (std::size_t i = 0; i < size(); ++i) m.col(Index(i)) = beams[i];
    return m;
  }
};

/// 2-D DFT codebook over the planar array, one copy per polarization port.
/// Beam order: polarization slowest, then row frequency, then column frequency.
inline Codebook dft_codebook(const ArrayGeometry& geom, int oversampling, Side side = Side::gnb) {
  geom.validate();
  require(oversampling >= 1, "oversampling must be >= 1");
  const int nr = geom.rows * oversampling;
  const int nc = geom.cols * oversampling;
  const Index n_spatial = geom.spatial_count();
  const double scale = 1.0 / std::sqrt(double(n_spatial));
  auto wrap = [](double f) { return f >= 0.5 ? f - 1.0 : f; };

  Codebook cb{{}, oversampling, side};
  cb.beams.reserve(std::size_t(nr) * nc * geom.polarizations);
  for (int pol = 0; pol < geom.polarizations; ++pol) {
    for (int p = 0; p < nr; ++p) {
      const double fr = wrap(double(p) / nr);
      for (int q = 0; q < nc; ++q) {
        const double fc = wrap(double(q) / nc);
        CVec beam = CVec::Zero(geom.element_count());
        for (int r = 0; r < geom.rows; ++r)
          for (int c = 0; c < geom.cols; ++c)
            beam(pol * n_spatial + Index(r) * geom.cols + c) =
                scale * std::polar(1.0, 2.0 * kPi * (c * fc + r * fr));
        cb.beams.push_back(std::move(beam));
      }
    }
  }
  return cb;
}

struct BeamPair {
  int ue_beam = 0;
  int gnb_beam = 0;
  double rsrp_db = 0.0;
};

/// One stacked block of the sensing matrix, kept as its Kronecker factors.
struct SensingBlock {
  CMat ue;   // U, N_UEant x N_UErf  (A = U^H)
  CMat gnb;  // V, N_NBant x N_NBrf  (B = V)

  Index rows() const { return ue.cols() * gnb.cols(); }
};

/// Phi = [Phi_1; ...; Phi_M] with Phi_i = (B_i)^T (x) A_i, applied through
/// (B^T (x) A) vec(X) = vec(A X B) without forming the Kronecker product.
class SensingMatrix {
 public:
  SensingMatrix() = default;
  SensingMatrix(Index n_ue, Index n_gnb) : n_ue_(n_ue), n_gnb_(n_gnb) {}

  void add_block(CMat ue, CMat gnb) {
    require_dims(ue.rows() == n_ue_ && gnb.rows() == n_gnb_, "sensing block dims mismatch");
    rows_ += ue.cols() * gnb.cols();
    blocks_.push_back({std::move(ue), std::move(gnb)});
  }

  const std::vector<SensingBlock>& blocks() const { return blocks_; }
  Index rows() const { return rows_; }
  Index cols() const { return n_ue_ * n_gnb_; }
  Index n_ue() const { return n_ue_; }
  Index n_gnb() const { return n_gnb_; }

  CVec apply(const CVec& v) const {
    require_dims(v.size() == cols(), "apply_phi: vector length mismatch");
    const Eigen::Map<const CMat> x(v.data(), n_ue_, n_gnb_);
    CVec out(rows_);
    Index off = 0;
    for (const auto& b : blocks_) {
      const CMat y = b.ue.adjoint() * x * b.gnb;
      out.segment(off, y.size()) = Eigen::Map<const CVec>(y.data(), y.size());
      off += y.size();
    }
    return out;
  }

  CVec apply_adjoint(const CVec& u) const {
    require_dims(u.size() == rows_, "apply_phi_adj: vector length mismatch");
    CMat acc = CMat::Zero(n_ue_, n_gnb_);
    Index off = 0;
    for (const auto& b : blocks_) {
      const Eigen::Map<const CMat> y(u.data() + off, b.ue.cols(), b.gnb.cols());
      acc.noalias() += b.ue * y * b.gnb.adjoint();
      off += b.rows();
    }
    return vec(acc);
  }

  /// Dense Phi. Meant for tests and tiny problems.
  CMat dense() const {
    CMat out(rows_, cols());
    Index off = 0;
    for (const auto& b : blocks_) {
      const CMat blk = kron(b.gnb.transpose(), b.ue.adjoint());
      out.middleRows(off, blk.rows()) = blk;
      off += blk.rows();
    }
    return out;
  }

 private:
  Index n_ue_ = 0;
  Index n_gnb_ = 0;
  Index rows_ = 0;
  std::vector<SensingBlock> blocks_;
};

inline CVec apply_phi(const SensingMatrix& phi, const CVec& v) { return phi.apply(v); }
inline CVec apply_phi_adj(const SensingMatrix& phi, const CVec& u) { return phi.apply_adjoint(u); }

struct MeasurementSet {
  CVec y;
  SensingMatrix phi;
  double noise_var = 0.0;
  int tap = 0;
};

/// vec(U^H H V) plus CN(0, noise_var) per entry.
inline CVec beamform_measure(const ChannelTap& h, const CMat& ue_beam, const CMat& gnb_beam,
                             double noise_var, Rng& rng) {
  require_dims(ue_beam.rows() == h.matrix.rows() && gnb_beam.rows() == h.matrix.cols(),
               "beamform_measure: beam dims do not match channel");
  require(noise_var >= 0.0, "noise variance must be >= 0");
  const CMat y = ue_beam.adjoint() * h.matrix * gnb_beam;
  CVec out = vec(y);
  if (noise_var > 0.0)
    for (Index i = 0; i < out.size(); ++i) out(i) += complex_normal(rng, noise_var);
  return out;
}

/// Sweeps every (ue, gnb) pair in lexicographic order and returns the m strongest.
/// RSRP is 10 log10 of the received power averaged over `taps`; ties keep the
/// lexicographically smaller pair.
inline std::vector<BeamPair> rsrp_rank(std::span<const ChannelTap> taps, const Codebook& ue_cb,
                                       const Codebook& gnb_cb, int m, double noise_var, Rng& rng) {
  require(m > 0, "rsrp_rank: m must be positive");
  require(!taps.empty(), "rsrp_rank: no taps");
  const std::size_t total = ue_cb.size() * gnb_cb.size();
  require(std::size_t(m) <= total, "rsrp_rank: m exceeds number of beam pairs");

  std::vector<BeamPair> all;
  all.reserve(total);
  for (std::size_t i = 0; i < ue_cb.size(); ++i) {
    for (std::size_t j = 0; j < gnb_cb.size(); ++j) {
      double power = 0.0;
      for (const auto& t : taps)
        power += beamform_measure(t, ue_cb[i], gnb_cb[j], noise_var, rng).squaredNorm();
      power /= double(taps.size());
      const double rsrp = power > 0.0 ? lin2db(power) : -std::numeric_limits<double>::infinity();
      all.push_back({int(i), int(j), rsrp});
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const BeamPair& a, const BeamPair& b) { return a.rsrp_db > b.rsrp_db; });
  all.resize(std::size_t(m));
  return all;
}

inline std::vector<BeamPair> rsrp_rank(const ChannelTap& h, const Codebook& ue_cb,
                                       const Codebook& gnb_cb, int m, double noise_var, Rng& rng) {
  return rsrp_rank(std::span<const ChannelTap>(&h, 1), ue_cb, gnb_cb, m, noise_var, rng);
}

inline SensingMatrix build_sensing_matrix(std::span<const BeamPair> pairs, const Codebook& ue_cb,
                                          const Codebook& gnb_cb) {
  require(!pairs.empty(), "build_sensing_matrix: no beam pairs");
  SensingMatrix phi(ue_cb.dim(), gnb_cb.dim());
  for (const auto& p : pairs) phi.add_block(ue_cb[std::size_t(p.ue_beam)], gnb_cb[std::size_t(p.gnb_beam)]);
  return phi;
}

/// Stacked measurement y = Phi vec(H) + noise, block by block.
inline CVec measure(const ChannelTap& h, const SensingMatrix& phi, double noise_var, Rng& rng) {
  CVec y(phi.rows());
  Index off = 0;
  for (const auto& b : phi.blocks()) {
    const CVec part = beamform_measure(h, b.ue, b.gnb, noise_var, rng);
    y.segment(off, part.size()) = part;
    off += part.size();
  }
  return y;
}

}  // namespace mmwcs
