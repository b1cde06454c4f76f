// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mmwcs/types.hpp"

#include <gtest/gtest.h>

namespace mmwcs::testing {

inline double rel_err(const CVec& a, const CVec& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

inline double rel_err(const CMat& a, const CMat& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

/// Uniform angle draws inside the panels' front half-space.
inline double draw_angle(Rng& rng, double lo = 5.0, double hi = 175.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace mmwcs::testing
