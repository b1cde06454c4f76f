// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mmwcs/dictionary.hpp"
#include "mmwcs/measurement.hpp"
#include "mmwcs/operators.hpp"
#include "mmwcs/pursuit.hpp"

#include <limits>
#include <span>
#include <vector>

namespace mmwcs {

/// One supervised example: measurement, its sensing matrix and vec(H) truth.
struct Sample {
  CVec y;
  SensingMatrix phi;
  CVec h;
};

/// Rescales y and h by 1/||y||. Returns the factor so estimates can be mapped back.
inline double normalize_sample(Sample& s) {
  const double n = s.y.norm();
  if (n > 0.0) {
    s.y /= n;
    s.h /= n;
  }
  return n > 0.0 ? n : 1.0;
}

// ---------------------------------------------------------------------------
// NMSE

/// ||h - h_hat||^2 / ||h||^2.
inline double nmse_ratio(const CVec& h, const CVec& h_hat) {
  require_dims(h.size() == h_hat.size(), "nmse: shape mismatch");
  const double den = h.squaredNorm();
  if (!(den > 0.0)) throw std::domain_error("nmse: reference channel has zero norm");
  return (h - h_hat).squaredNorm() / den;
}

/// Per-sample NMSE in dB. Exact recovery gives -infinity.
inline double nmse_db(const CVec& h, const CVec& h_hat) { return lin2db(nmse_ratio(h, h_hat)); }

inline constexpr double kNmseFloorDb = -120.0;

/// Per-sample NMSE clamped at kNmseFloorDb, for CDFs and reports.
inline double nmse_db_floored(const CVec& h, const CVec& h_hat) {
  return std::max(nmse_db(h, h_hat), kNmseFloorDb);
}

/// 10 log10 of the mean per-sample ratio over a batch.
inline double nmse_db(std::span<const CVec> h, std::span<const CVec> h_hat) {
  require_dims(h.size() == h_hat.size() && !h.empty(), "nmse: batch size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) acc += nmse_ratio(h[i], h_hat[i]);
  return lin2db(acc / double(h.size()));
}

// ---------------------------------------------------------------------------
// OMP on the angular grid

struct OmpResult {
  std::vector<Quadruple> quadruples;  // selection order
  std::vector<Index> atoms;
  std::vector<cdouble> gains;
  ChannelTap estimated_channel;
  double residual_norm = 0.0;
  std::vector<double> residual_trace;
  bool zero_measurement = false;

  /// Position of the entry with the largest |gain|; 0 when empty.
  std::size_t strongest() const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < gains.size(); ++k)
      if (std::abs(gains[k]) > std::abs(gains[best])) best = k;
    return best;
  }
};

inline OmpResult omp(const MeasurementSet& ms, const GridDictionary& dict, const OmpOptions& opts = {}) {
  require(ms.y.size() > 0, "omp: empty measurement");
  const GridSensingOperator op(dict, ms.phi);
  const OmpTrace t = omp_core(op, ms.y, opts);
  OmpResult out;
  out.zero_measurement = t.zero_measurement;
  out.residual_trace = t.residual_norms;
  out.residual_norm = t.residual_norms.back();
  out.atoms = t.estimate.support;
  out.gains = t.estimate.coeffs;
  const Index n_ue = dict.rx_steering().rows();
  const Index n_gnb = dict.tx_steering().rows();
  CVec h = CVec::Zero(n_ue * n_gnb);
  for (std::size_t k = 0; k < out.atoms.size(); ++k) {
    out.quadruples.push_back(dict.grid().angles(out.atoms[k]));
    h += out.gains[k] * dict.atom(out.atoms[k]);
  }
  out.estimated_channel = {ms.tap, unvec(h, n_ue, n_gnb)};
  return out;
}

/// OMP against a learned dictionary; returns the synthesized channel estimate.
inline CVec omp_estimate(const MeasurementSet& ms, const LearnedDictionary& dict,
                         const OmpOptions& opts = {}) {
  const DenseOperator op = make_operator(ms.phi, dict);
  const OmpTrace t = omp_core(op, ms.y, opts);
  return dict.apply(t.estimate.dense());
}

// ---------------------------------------------------------------------------
// ISTA

struct IstaReport {
  double lipschitz = 0.0;
  bool step_exceeds_bound = false;  // gamma > 1/L: convergence not guaranteed
  IstaTrace trace;
};

template <class Dict>
SparseEstimate ista(const MeasurementSet& ms, const Dict& dict, const IstaConfig& cfg,
                    IstaReport* report = nullptr) {
  const auto op = make_operator(ms.phi, dict);
  if (report) {
    report->lipschitz = lipschitz_estimate(op);
    report->step_exceeds_bound = cfg.step * report->lipschitz > 1.0;
  }
  return SparseEstimate::from_dense(ista_core(op, ms.y, cfg, report ? &report->trace : nullptr));
}

template <class Dict>
CVec ista_estimate(const Sample& s, const Dict& dict, const IstaConfig& cfg) {
  const auto op = make_operator(s.phi, dict);
  return dict.apply(ista_core(op, s.y, cfg));
}

struct GridSearchResult {
  IstaConfig best;
  double best_nmse_db = 0.0;
  std::vector<double> scores;  // step-major, threshold-minor
};

/// Exhaustive (step, threshold) scan minimizing the mean validation NMSE.
/// Steps form the outer loop; the first minimum in scan order wins. Samples
/// with an all-zero channel are skipped; if none remain every cell scores 0 dB.
template <class Dict>
GridSearchResult grid_search_ista(std::span<const Sample> data, const Dict& dict,
                                  std::span<const double> step_grid,
                                  std::span<const double> theta_grid, int iterations) {
  require(!step_grid.empty() && !theta_grid.empty(), "grid_search_ista: empty grid");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].h.squaredNorm() > 0.0) valid.push_back(i);

  using Op = decltype(make_operator(data[0].phi, dict));
  std::vector<Op> ops;
  for (std::size_t i : valid) ops.push_back(make_operator(data[i].phi, dict));

  GridSearchResult res;
  double best = std::numeric_limits<double>::infinity();
  for (double step : step_grid) {
    for (double theta : theta_grid) {
      const IstaConfig cfg{step, theta, iterations};
      double score = 0.0;
      if (!valid.empty()) {
        double acc = 0.0;
        for (std::size_t k = 0; k < valid.size(); ++k) {
          const Sample& s = data[valid[k]];
          const CVec h_hat = dict.apply(ista_core(ops[k], s.y, cfg));
          acc += nmse_ratio(s.h, h_hat);
        }
        score = lin2db(acc / double(valid.size()));
        if (std::isnan(score)) score = std::numeric_limits<double>::infinity();
      }
      res.scores.push_back(score);
      if (score < best) {
        best = score;
        res.best = cfg;
        res.best_nmse_db = score;
      }
    }
  }
  if (!std::isfinite(best) && best > 0) {
    res.best = {step_grid[0], theta_grid[0], iterations};
    res.best_nmse_db = best;
  }
  return res;
}

}  // namespace mmwcs
