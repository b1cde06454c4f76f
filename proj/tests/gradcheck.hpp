// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference check of the DLISTA gradients, shared by the unit
// tests and the acceptance binary.

#include "mmwcs/dlista.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mmwcs::testing {

struct GradCheckReport {
  int checked = 0;
  int skipped_near_kink = 0;
  int failures = 0;
  double worst_rel = 0.0;
  std::string worst_name;
};

/// Smallest | |u| - theta | over all pre-threshold entries of a batch.
inline double kink_distance(std::span<const Sample> batch, const DlistaParams& p) {
  const auto f = detail::batch_forward(batch, p);
  double d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < p.layers(); ++k) {
    const double th = p.theta(k);
    const CMat& u = f.u[std::size_t(k)];
    for (Index i = 0; i < u.size(); ++i) d = std::min(d, std::abs(std::abs(u(i)) - th));
  }
  return d;
}

/// Compares every analytic gradient entry with a central difference of step h.
/// An entry whose perturbation moves some |u| across a threshold (the kink
/// distance at +-h drops below `kink_margin`) is skipped.
inline GradCheckReport check_gradients(std::span<const Sample> batch, const DlistaParams& p0, double tol,
                                       double h = 1e-5, double kink_margin = 1e-6) {
  GradCheckReport rep;
  const DlistaGradients g = dlista_gradients(batch, p0);
  auto loss = [&](const DlistaParams& p) { return dlista_gradients(batch, p).loss; };

  auto probe = [&](const std::string& name, double analytic, const std::function<void(DlistaParams&, double)>& bump) {
    DlistaParams plus = p0, minus = p0;
    bump(plus, h);
    bump(minus, -h);
    if (kink_distance(batch, plus) < kink_margin || kink_distance(batch, minus) < kink_margin) {
      ++rep.skipped_near_kink;
      return;
    }
    const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
    const double err = std::abs(fd - analytic);
    const double scale = std::max(std::abs(fd), std::abs(analytic));
    const double rel = scale > 0 ? err / scale : 0.0;
    ++rep.checked;
    // Entries whose true gradient is ~0 are compared absolutely.
    const bool ok = err <= tol * scale || err <= 1e-8;
    if (!ok) ++rep.failures;
    if (!ok && rel > rep.worst_rel) {
      rep.worst_rel = rel;
      rep.worst_name = name;
    }
    if (ok && scale > 1e-6 && rel > rep.worst_rel) {
      rep.worst_rel = rel;
      rep.worst_name = name;
    }
  };

  for (std::size_t k = 0; k < p0.gamma.size(); ++k) {
    probe("gamma" + std::to_string(k), g.gamma[k], [k](DlistaParams& p, double d) { p.gamma[k] += d; });
    probe("theta" + std::to_string(k), g.theta_raw[k], [k](DlistaParams& p, double d) { p.theta_raw[k] += d; });
  }
  auto matrix = [&](const std::string& name, const CMat& grad, const std::function<CMat&(DlistaParams&)>& pick) {
    for (Index i = 0; i < grad.size(); ++i) {
      probe(name + "[" + std::to_string(i) + "].re", grad(i).real(),
            [&, i](DlistaParams& p, double d) { pick(p)(i) += cdouble(d, 0.0); });
      probe(name + "[" + std::to_string(i) + "].im", grad(i).imag(),
            [&, i](DlistaParams& p, double d) { pick(p)(i) += cdouble(0.0, d); });
    }
  };
  for (std::size_t k = 0; k < p0.psi.size(); ++k)
    matrix("psi" + std::to_string(k), g.psi[k], [k](DlistaParams& p) -> CMat& { return p.psi[k]; });
  matrix("psi_final", g.psi_final, [](DlistaParams& p) -> CMat& { return p.psi_final; });
  return rep;
}

}  // namespace mmwcs::testing
