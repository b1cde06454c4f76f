// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mmwcs/types.hpp"

#include <algorithm>
#include <cstddef>

namespace mmwcs {

/// One discretized angle axis: `count` points spread evenly over [lo, hi] degrees
/// (endpoints included). A single-point axis sits at `lo`.
struct GridAxis {
  int count = 1;
  double lo = 0.0;
  double hi = 0.0;

  void validate() const {
    require(count >= 1, "grid axis needs at least one point");
    require(std::isfinite(lo) && std::isfinite(hi), "grid axis range must be finite");
    require(count == 1 || hi > lo, "grid axis points must be strictly increasing");
  }

  double step() const { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
  double point(int i) const { return lo + i * step(); }

  int nearest_index(double value) const {
    if (count == 1) return 0;
    const long i = std::lround((value - lo) / step());
    return static_cast<int>(std::clamp<long>(i, 0, count - 1));
  }
  double snap(double value) const { return point(nearest_index(value)); }
};

struct Quadruple {
  double aoa_az = 0.0;
  double aoa_zen = 0.0;
  double aod_az = 0.0;
  double aod_zen = 0.0;

  friend bool operator==(const Quadruple&, const Quadruple&) = default;
};

struct GridIndex {
  int ue_azi = 0;
  int ue_elev = 0;
  int nb_azi = 0;
  int nb_elev = 0;

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Angular grid over (AoA, ZoA, AoD, ZoD). The "elev" axes carry zenith angles.
///
/// Atom indices decode with ue_azi fastest, then ue_elev, nb_azi, nb_elev. This
/// makes the receive-side index the fast one inside each atom, matching the
/// Kronecker layout conj(P_T) (x) P_R.
struct AngularGrid {
  GridAxis ue_azi;
  GridAxis ue_elev;
  GridAxis nb_azi;
  GridAxis nb_elev;

  void validate() const {
    ue_azi.validate();
    ue_elev.validate();
    nb_azi.validate();
    nb_elev.validate();
  }

  Index rx_count() const { return Index(ue_azi.count) * ue_elev.count; }
  Index tx_count() const { return Index(nb_azi.count) * nb_elev.count; }
  Index atom_count() const { return rx_count() * tx_count(); }

  Index rx_index(int azi, int elev) const { return Index(elev) * ue_azi.count + azi; }
  Index tx_index(int azi, int elev) const { return Index(elev) * nb_azi.count + azi; }

  Index encode(const GridIndex& g) const {
    return tx_index(g.nb_azi, g.nb_elev) * rx_count() + rx_index(g.ue_azi, g.ue_elev);
  }

  GridIndex decode(Index atom) const {
    if (atom < 0 || atom >= atom_count()) throw std::out_of_range("atom index out of range");
    const Index rx = atom % rx_count();
    const Index tx = atom / rx_count();
    return {static_cast<int>(rx % ue_azi.count), static_cast<int>(rx / ue_azi.count),
            static_cast<int>(tx % nb_azi.count), static_cast<int>(tx / nb_azi.count)};
  }

  Quadruple angles(const GridIndex& g) const {
    return {ue_azi.point(g.ue_azi), ue_elev.point(g.ue_elev), nb_azi.point(g.nb_azi),
            nb_elev.point(g.nb_elev)};
  }
  Quadruple angles(Index atom) const { return angles(decode(atom)); }

  GridIndex nearest(const Quadruple& q) const {
    return {ue_azi.nearest_index(q.aoa_az), ue_elev.nearest_index(q.aoa_zen),
            nb_azi.nearest_index(q.aod_az), nb_elev.nearest_index(q.aod_zen)};
  }
};

/// 10 degree grid over the front half-space of both panels: 18 x 18 points per side.
inline AngularGrid desk_grid() {
  const GridAxis axis{18, 5.0, 175.0};
  return {axis, axis, axis, axis};
}

}  // namespace mmwcs
