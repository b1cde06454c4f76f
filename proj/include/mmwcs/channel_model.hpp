// SPDX-License-Identifier: Apache-2.0
#pragma once

// Geometric multipath channel synthesis.
//
// Axis convention (array-local frame): zenith is measured from +z, azimuth from
// +x in the x-y plane. Panels lie in the local x-z plane with columns along x and
// rows along z, so the broadside direction is +y (azimuth 90, zenith 90) and the
// front half-space is azimuth in (0, 180).
//
// Element order inside a steering vector: polarization slowest, then row, then
// column. Dual-polarized panels carry two co-located short dipoles in the panel
// plane, slanted by +/- slant_deg from the z axis; each responds to a
// theta-polarized incident field through the projection of its orientation onto
// theta-hat, so the polarization weights vary with direction.

#include "mmwcs/grid.hpp"
#include "mmwcs/types.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <vector>

namespace mmwcs {

struct ArrayGeometry {
  int rows = 1;
  int cols = 1;
  double element_spacing = 0.5;  // in wavelengths
  int polarizations = 1;
  std::array<double, 3> orientation_deg{0.0, 0.0, 0.0};  // bearing (z), downtilt (y), slant (x)
  double slant_deg = 45.0;

  Index element_count() const { return Index(rows) * cols * polarizations; }
  Index spatial_count() const { return Index(rows) * cols; }

  void validate() const {
    require(rows >= 1 && cols >= 1, "array rows and cols must be positive");
    require(polarizations == 1 || polarizations == 2, "polarizations must be 1 or 2");
    require(element_spacing > 0.0 && std::isfinite(element_spacing), "element spacing must be > 0");
  }
};

struct PathParams {
  cdouble gain{0.0, 0.0};
  double aoa_az = 0.0;
  double aoa_zen = 0.0;
  double aod_az = 0.0;
  double aod_zen = 0.0;
  int tap = 0;

  Quadruple quadruple() const { return {aoa_az, aoa_zen, aod_az, aod_zen}; }
};

struct ChannelTap {
  int tap = 0;
  CMat matrix;  // N_UEant x N_NBant
};

namespace detail {

using Vec3 = Eigen::Vector3d;

inline Eigen::Matrix3d orientation_matrix(const std::array<double, 3>& euler_deg) {
  const double a = deg2rad(euler_deg[0]);
  const double b = deg2rad(euler_deg[1]);
  const double c = deg2rad(euler_deg[2]);
  return (Eigen::AngleAxisd(a, Vec3::UnitZ()) * Eigen::AngleAxisd(b, Vec3::UnitY()) *
          Eigen::AngleAxisd(c, Vec3::UnitX()))
      .toRotationMatrix();
}

inline void check_angles(double azimuth, double zenith) {
  if (!(azimuth >= 0.0 && azimuth < 360.0))
    throw std::domain_error("azimuth must lie in [0, 360) degrees");
  if (!(zenith >= 0.0 && zenith <= 180.0))
    throw std::domain_error("zenith must lie in [0, 180] degrees");
}

}  // namespace detail

/// Unit-norm array response towards (azimuth, zenith), both in degrees.
inline CVec steering_vector(const ArrayGeometry& geom, double azimuth, double zenith) {
  geom.validate();
  detail::check_angles(azimuth, zenith);
  const double th = deg2rad(zenith);
  const double ph = deg2rad(azimuth);
  const detail::Vec3 dir{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};

  const bool rotated = geom.orientation_deg != std::array<double, 3>{0.0, 0.0, 0.0};
  const Eigen::Matrix3d rot_t =
      rotated ? Eigen::Matrix3d(detail::orientation_matrix(geom.orientation_deg).transpose())
              : Eigen::Matrix3d::Identity();
  const detail::Vec3 u = rot_t * dir;

  const Index n_spatial = geom.spatial_count();
  CVec spatial(n_spatial);
  const double k = 2.0 * kPi * geom.element_spacing;
  const double scale = 1.0 / std::sqrt(double(n_spatial));
  for (int r = 0; r < geom.rows; ++r)
    for (int c = 0; c < geom.cols; ++c)
      spatial(Index(r) * geom.cols + c) = scale * std::polar(1.0, k * (c * u.x() + r * u.z()));

  if (geom.polarizations == 1) return spatial;

  const detail::Vec3 theta_hat =
      rot_t * detail::Vec3{std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th)};
  const double zeta = deg2rad(geom.slant_deg);
  const detail::Vec3 dipole_a{std::sin(zeta), 0.0, std::cos(zeta)};
  const detail::Vec3 dipole_b{std::cos(zeta), 0.0, -std::sin(zeta)};
  double wa = dipole_a.dot(theta_hat);
  double wb = dipole_b.dot(theta_hat);
  const double wn = std::hypot(wa, wb);
  if (wn < 1e-9) {
    // Field orthogonal to both dipoles; only reachable along the panel's z axis.
    wa = wb = std::sqrt(0.5);
  } else {
    wa /= wn;
    wb /= wn;
  }
  CVec out(2 * n_spatial);
  out.head(n_spatial) = wa * spatial;
  out.tail(n_spatial) = wb * spatial;
  return out;
}

/// H_d = sum_l gain_l * p_R(aoa_l) * p_T(aod_l)^H. `tap` names the result when
/// `paths` is empty; otherwise every path must carry the same tap index.
inline ChannelTap build_channel_tap(std::span<const PathParams> paths, const ArrayGeometry& rx,
                                    const ArrayGeometry& tx, int tap = -1) {
  if (tap < 0) tap = paths.empty() ? 0 : paths.front().tap;
  ChannelTap out{tap, CMat::Zero(rx.element_count(), tx.element_count())};
  for (const auto& p : paths) {
    if (p.tap != tap) throw std::invalid_argument("build_channel_tap: paths span several taps");
    const CVec pr = steering_vector(rx, p.aoa_az, p.aoa_zen);
    const CVec pt = steering_vector(tx, p.aod_az, p.aod_zen);
    out.matrix.noalias() += p.gain * pr * pt.adjoint();
  }
  return out;
}

/// One ChannelTap per distinct tap index, ascending.
inline std::vector<ChannelTap> build_channel_taps(std::span<const PathParams> paths,
                                                  const ArrayGeometry& rx,
                                                  const ArrayGeometry& tx) {
  std::vector<int> taps;
  for (const auto& p : paths) taps.push_back(p.tap);
  std::sort(taps.begin(), taps.end());
  taps.erase(std::unique(taps.begin(), taps.end()), taps.end());
  std::vector<ChannelTap> out;
  for (int t : taps) {
    std::vector<PathParams> sub;
    std::copy_if(paths.begin(), paths.end(), std::back_inserter(sub),
                 [t](const PathParams& p) { return p.tap == t; });
    out.push_back(build_channel_tap(sub, rx, tx, t));
  }
  return out;
}

/// Positions (into `taps`) of the k largest-norm taps, descending; ties keep the
/// lower position. k larger than the list returns every tap.
inline std::vector<std::size_t> dominant_taps(std::span<const ChannelTap> taps, int k) {
  require(k >= 1, "dominant_taps: k must be >= 1");
  std::vector<std::size_t> order(taps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> norms(taps.size());
  for (std::size_t i = 0; i < taps.size(); ++i) norms[i] = taps[i].matrix.norm();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  if (order.size() > std::size_t(k)) order.resize(std::size_t(k));
  return order;
}

// ---------------------------------------------------------------------------
// Scenario and path generator

struct AngleRange {
  double lo = 5.0;
  double hi = 175.0;
  double clamp(double v) const { return std::clamp(v, lo, hi); }
};

/// Simplified cluster generator. A fixed set of scatterer clusters (drawn from
/// environment_seed) is shared by every UE of a scenario; each UE sees a subset
/// of them, shifted by a per-UE offset, with paths spread around each center.
struct PathGeneratorConfig {
  int environment_clusters = 6;
  std::uint64_t environment_seed = 17;
  int cluster_count_min = 1;
  int cluster_count_max = 3;
  double cluster_offset_deg = 8.0;   // per-UE shift of a cluster center (std dev)
  double angular_spread_deg = 4.0;   // per-path spread around the center (std dev)
  int tap_count_min = 1;
  int tap_count_max = 5;
  int paths_per_tap_min = 1;
  int paths_per_tap_max = 3;
  double pdp_decay_taps = 1.5;       // power-delay profile exp(-d / tau)
  double distance_min_m = 5.0;
  double distance_max_m = 40.0;
  // Log-distance path loss PL = a + b log10(d_m) + c log10(f_GHz), indoor NLOS-like.
  double pathloss_a = 17.3;
  double pathloss_b = 38.3;
  double pathloss_c = 24.9;
  AngleRange ue_azimuth{5.0, 175.0};
  AngleRange ue_zenith{5.0, 175.0};
  AngleRange gnb_azimuth{5.0, 175.0};
  AngleRange gnb_zenith{5.0, 175.0};
  bool on_grid = false;
  AngularGrid grid = desk_grid();  // snapping target when on_grid
};

struct ScenarioConfig {
  double carrier_freq_hz = 28e9;
  double subcarrier_spacing_hz = 120e3;
  int num_tones = 4096;
  double gnb_tx_power_dbm = 23.0;
  double tx_power_bandwidth_hz = 100e6;
  double gnb_antenna_gain_dbi = 5.0;
  double ue_noise_figure_db = 13.0;
  double noise_var_override = -1.0;  // < 0: use the link budget
  std::uint64_t rng_seed = 1;
  ArrayGeometry ue_geom{2, 2, 0.5, 2};
  ArrayGeometry gnb_geom{4, 4, 0.5, 2};
  PathGeneratorConfig paths;

  void validate() const {
    for (double v : {carrier_freq_hz, subcarrier_spacing_hz, gnb_tx_power_dbm, tx_power_bandwidth_hz,
                     gnb_antenna_gain_dbi, ue_noise_figure_db, noise_var_override})
      require(std::isfinite(v), "scenario powers and figures must be finite");
    require(num_tones > 0 && (num_tones & (num_tones - 1)) == 0, "num_tones must be a power of two");
    require(carrier_freq_hz > 0 && subcarrier_spacing_hz > 0 && tx_power_bandwidth_hz > 0,
            "frequencies must be positive");
    ue_geom.validate();
    gnb_geom.validate();
    const auto& g = paths;
    require(g.environment_clusters >= 1, "environment needs at least one cluster");
    require(1 <= g.cluster_count_min && g.cluster_count_min <= g.cluster_count_max,
            "bad cluster count range");
    require(1 <= g.tap_count_min && g.tap_count_min <= g.tap_count_max, "bad tap count range");
    require(1 <= g.paths_per_tap_min && g.paths_per_tap_min <= g.paths_per_tap_max,
            "bad paths-per-tap range");
    require(g.pdp_decay_taps > 0, "pdp decay must be positive");
    require(0 < g.distance_min_m && g.distance_min_m <= g.distance_max_m, "bad distance range");
    require(g.cluster_offset_deg >= 0 && g.angular_spread_deg >= 0, "spreads must be >= 0");
    if (g.on_grid) g.grid.validate();
  }

  double bandwidth_hz() const { return num_tones * subcarrier_spacing_hz; }

  /// Per-element SNR (dB) at 0 dB path loss:
  /// P_tx + G_tx - (-174 dBm/Hz + 10 log10(B_tx) + NF).
  double reference_snr_db() const {
    return gnb_tx_power_dbm + gnb_antenna_gain_dbi + 174.0 - 10.0 * std::log10(tx_power_bandwidth_hz) -
           ue_noise_figure_db;
  }

  /// Noise variance relative to unit transmit power; path gains carry the path loss.
  double noise_variance() const {
    return noise_var_override >= 0.0 ? noise_var_override : db2lin(-reference_snr_db());
  }
};

struct ClusterCenter {
  Quadruple center;
  double power = 1.0;
};

struct Environment {
  std::vector<ClusterCenter> clusters;
};

inline Environment make_environment(const ScenarioConfig& cfg) {
  const auto& g = cfg.paths;
  Rng rng(g.environment_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto draw = [&](const AngleRange& r) { return r.lo + (r.hi - r.lo) * u01(rng); };
  Environment env;
  for (int i = 0; i < g.environment_clusters; ++i) {
    ClusterCenter c;
    c.center = {draw(g.ue_azimuth), draw(g.ue_zenith), draw(g.gnb_azimuth), draw(g.gnb_zenith)};
    c.power = std::exp(-2.0 * u01(rng));
    env.clusters.push_back(c);
  }
  return env;
}

/// Draws one UE's paths. Deterministic in (cfg, env, rng state).
inline std::vector<PathParams> synth_paths(const ScenarioConfig& cfg, const Environment& env,
                                           Rng& rng) {
  const auto& g = cfg.paths;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int n_env = static_cast<int>(env.clusters.size());
  const int n_clusters = std::min(uniform_int(g.cluster_count_min, g.cluster_count_max), n_env);
  std::vector<int> pick(n_env);
  std::iota(pick.begin(), pick.end(), 0);
  for (int i = 0; i < n_clusters; ++i) std::swap(pick[i], pick[uniform_int(i, n_env - 1)]);

  std::vector<ClusterCenter> seen;
  double total_power = 0.0;
  for (int i = 0; i < n_clusters; ++i) {
    ClusterCenter c = env.clusters[pick[i]];
    c.center.aoa_az = g.ue_azimuth.clamp(c.center.aoa_az + g.cluster_offset_deg * n01(rng));
    c.center.aoa_zen = g.ue_zenith.clamp(c.center.aoa_zen + g.cluster_offset_deg * n01(rng));
    c.center.aod_az = g.gnb_azimuth.clamp(c.center.aod_az + g.cluster_offset_deg * n01(rng));
    c.center.aod_zen = g.gnb_zenith.clamp(c.center.aod_zen + g.cluster_offset_deg * n01(rng));
    total_power += c.power;
    seen.push_back(c);
  }

  const double distance = g.distance_min_m + (g.distance_max_m - g.distance_min_m) * u01(rng);
  const double pathloss_db = g.pathloss_a + g.pathloss_b * std::log10(distance) +
                             g.pathloss_c * std::log10(cfg.carrier_freq_hz / 1e9);
  // Steering vectors are unit-norm, so the array gain lives in the path amplitude.
  const double array_gain = double(cfg.ue_geom.element_count() * cfg.gnb_geom.element_count());
  const double scale = db2lin(-pathloss_db) * array_gain;

  const int n_taps = uniform_int(g.tap_count_min, g.tap_count_max);
  double pdp_norm = 0.0;
  for (int d = 0; d < n_taps; ++d) pdp_norm += std::exp(-d / g.pdp_decay_taps);

  std::vector<PathParams> out;
  for (int d = 0; d < n_taps; ++d) {
    const int n_paths = uniform_int(g.paths_per_tap_min, g.paths_per_tap_max);
    const double tap_power = std::exp(-d / g.pdp_decay_taps) / pdp_norm;
    for (int l = 0; l < n_paths; ++l) {
      // Cluster chosen proportionally to its power.
      double r = u01(rng) * total_power;
      int ci = 0;
      while (ci + 1 < n_clusters && r >= seen[ci].power) r -= seen[ci++].power;
      const auto& c = seen[ci];
      PathParams p;
      p.tap = d;
      p.aoa_az = g.ue_azimuth.clamp(c.center.aoa_az + g.angular_spread_deg * n01(rng));
      p.aoa_zen = g.ue_zenith.clamp(c.center.aoa_zen + g.angular_spread_deg * n01(rng));
      p.aod_az = g.gnb_azimuth.clamp(c.center.aod_az + g.angular_spread_deg * n01(rng));
      p.aod_zen = g.gnb_zenith.clamp(c.center.aod_zen + g.angular_spread_deg * n01(rng));
      if (g.on_grid) {
        const Quadruple q = g.grid.angles(g.grid.nearest(p.quadruple()));
        p.aoa_az = q.aoa_az;
        p.aoa_zen = q.aoa_zen;
        p.aod_az = q.aod_az;
        p.aod_zen = q.aod_zen;
      }
      const double var = scale * tap_power / n_paths;
      p.gain = complex_normal(rng, var);
      out.push_back(p);
    }
  }
  return out;
}

inline std::vector<PathParams> synth_paths(const ScenarioConfig& cfg, Rng& rng) {
  return synth_paths(cfg, make_environment(cfg), rng);
}

}  // namespace mmwcs
