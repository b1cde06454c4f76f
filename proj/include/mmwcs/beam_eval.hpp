// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mmwcs/channel_model.hpp"
#include "mmwcs/measurement.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <span>
#include <string>
#include <vector>

namespace mmwcs {

enum class BeamMethod { codebook, oversampled, custom_angles, exhaustive_from_estimate, rank2_digital };

inline std::string to_string(BeamMethod m) {
  switch (m) {
    case BeamMethod::codebook: return "codebook";
    case BeamMethod::oversampled: return "oversampled";
    case BeamMethod::custom_angles: return "custom_angles";
    case BeamMethod::exhaustive_from_estimate: return "exhaustive_from_estimate";
    case BeamMethod::rank2_digital: return "rank2_digital";
  }
  return "unknown";
}

/// UE combiner U (applied as U^H) and gNB precoder V, one column per stream.
struct BeamSelection {
  CMat ue;
  CMat gnb;
  BeamMethod method = BeamMethod::codebook;
  int ue_index = -1;   // codebook positions when the beams come from one
  int gnb_index = -1;
};

/// Beams steered along a path's angles: U = p_R(AoA, ZoA), V = p_T(AoD, ZoD).
/// On a single path H = a p_R p_T^H this gives |U^H H V| = |a|.
inline BeamSelection custom_beam(const Quadruple& q, const ArrayGeometry& tx_geom,
                                 const ArrayGeometry& rx_geom) {
  BeamSelection s;
  s.ue = steering_vector(rx_geom, q.aoa_az, q.aoa_zen);
  s.gnb = steering_vector(tx_geom, q.aod_az, q.aod_zen);
  s.method = BeamMethod::custom_angles;
  return s;
}

/// Pair maximizing |u_i^H H v_j| over the two codebooks; ties keep the
/// lexicographically first (ue, gnb) pair.
inline BeamSelection exhaustive_beam_search(const ChannelTap& h, const Codebook& ue_cb,
                                            const Codebook& gnb_cb,
                                            BeamMethod tag = BeamMethod::exhaustive_from_estimate) {
  require(ue_cb.size() > 0 && gnb_cb.size() > 0, "exhaustive_beam_search: empty codebook");
  require_dims(ue_cb.dim() == h.matrix.rows() && gnb_cb.dim() == h.matrix.cols(),
               "exhaustive_beam_search: codebook dims do not match channel");
  const CMat gains = ue_cb.matrix().adjoint() * h.matrix * gnb_cb.matrix();
  Index bi = 0, bj = 0;
  double best = -1.0;
  for (Index i = 0; i < gains.rows(); ++i)
    for (Index j = 0; j < gains.cols(); ++j)
      if (std::abs(gains(i, j)) > best) {
        best = std::abs(gains(i, j));
        bi = i;
        bj = j;
      }
  BeamSelection s;
  s.ue = ue_cb[std::size_t(bi)];
  s.gnb = gnb_cb[std::size_t(bj)];
  s.method = tag;
  s.ue_index = int(bi);
  s.gnb_index = int(bj);
  return s;
}

/// log2 det(I + P / (sigma^2 N_s) H_eff H_eff^H), H_eff = U^H H V, with the
/// power split equally over the N_s = cols(V) streams. Non-finite inputs give
/// 0 and a message in `diagnostic`.
inline double spectral_efficiency(const ChannelTap& h, const BeamSelection& sel, double noise_var,
                                  double power = 1.0, std::string* diagnostic = nullptr) {
  require_dims(sel.ue.rows() == h.matrix.rows() && sel.gnb.rows() == h.matrix.cols(),
               "spectral_efficiency: beam dims do not match channel");
  require(noise_var > 0.0 && power >= 0.0, "spectral_efficiency: need noise_var > 0, power >= 0");
  const CMat heff = sel.ue.adjoint() * h.matrix * sel.gnb;
  if (!heff.allFinite()) {
    if (diagnostic) *diagnostic = "non-finite effective channel";
    return 0.0;
  }
  const double snr = power / (noise_var * double(sel.gnb.cols()));
  const CMat gram = heff * heff.adjoint();
  Eigen::SelfAdjointEigenSolver<CMat> eig(gram, Eigen::EigenvaluesOnly);
  double se = 0.0;
  for (Index i = 0; i < eig.eigenvalues().size(); ++i)
    se += std::log2(1.0 + snr * std::max(eig.eigenvalues()(i), 0.0));
  return se;
}

enum class TapAggregation { strongest, average };

/// SE over several taps of one UE: on the strongest tap, or the mean per-tap SE.
inline double spectral_efficiency(std::span<const ChannelTap> taps, const BeamSelection& sel,
                                  double noise_var, TapAggregation agg = TapAggregation::strongest,
                                  double power = 1.0) {
  require(!taps.empty(), "spectral_efficiency: no taps");
  if (agg == TapAggregation::strongest)
    return spectral_efficiency(taps[dominant_taps(taps, 1).front()], sel, noise_var, power);
  double acc = 0.0;
  for (const auto& t : taps) acc += spectral_efficiency(t, sel, noise_var, power);
  return acc / double(taps.size());
}

enum class PowerAllocation { equal, water_filling };

/// Precoder/combiner pair along the top-2 singular vectors of H.
inline BeamSelection rank2_digital_selection(const ChannelTap& h) {
  Eigen::JacobiSVD<CMat> svd(h.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index k = std::min<Index>(2, svd.singularValues().size());
  BeamSelection s;
  s.ue = svd.matrixU().leftCols(k);
  s.gnb = svd.matrixV().leftCols(k);
  s.method = BeamMethod::rank2_digital;
  return s;
}

/// Capacity of the best two eigen-streams of the true channel. With equal
/// allocation each stream gets P/2; water-filling optimizes the split.
inline double rank2_digital_bound(const ChannelTap& h, double noise_var, double power = 1.0,
                                  PowerAllocation alloc = PowerAllocation::equal) {
  require(noise_var > 0.0, "rank2_digital_bound: noise_var must be > 0");
  Eigen::JacobiSVD<CMat> svd(h.matrix);
  const RVec& sv = svd.singularValues();
  std::vector<double> g;
  for (Index i = 0; i < std::min<Index>(2, sv.size()); ++i) g.push_back(sv(i) * sv(i) / noise_var);
  if (g.empty()) return 0.0;

  std::vector<double> p(g.size(), 0.0);
  if (alloc == PowerAllocation::equal) {
    std::fill(p.begin(), p.end(), power / 2.0);
  } else {
    // Water level over the active streams (g sorted descending).
    for (std::size_t active = g.size(); active >= 1; --active) {
      if (g[active - 1] <= 0.0) continue;
      double inv = 0.0;
      for (std::size_t i = 0; i < active; ++i) inv += 1.0 / g[i];
      const double level = (power + inv) / double(active);
      if (level - 1.0 / g[active - 1] >= 0.0) {
        for (std::size_t i = 0; i < active; ++i) p[i] = level - 1.0 / g[i];
        break;
      }
    }
  }
  double se = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) se += std::log2(1.0 + p[i] * g[i]);
  return se;
}

struct CdfSeries {
  std::vector<double> values;     // ascending
  std::vector<double> quantiles;  // (i + 1) / n

  /// Smallest value whose empirical CDF reaches q.
  double quantile(double q) const {
    require(!values.empty(), "quantile of empty CDF");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (quantiles[i] >= q - 1e-12) return values[i];
    return values.back();
  }
  double median() const { return quantile(0.5); }
};

inline CdfSeries build_cdf(std::vector<double> values) {
  require(!values.empty(), "build_cdf: empty input");
  std::sort(values.begin(), values.end());
  CdfSeries c;
  const double n = double(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) c.quantiles.push_back(double(i + 1) / n);
  c.values = std::move(values);
  return c;
}

}  // namespace mmwcs
