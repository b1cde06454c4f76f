// SPDX-License-Identifier: Apache-2.0
#include "mmwcs/measurement.hpp"
#include "support.hpp"

#include <algorithm>
#include <tuple>

using namespace mmwcs;
using mmwcs::testing::rel_err;

namespace {

const ArrayGeometry kUe{2, 2, 0.5, 2};
const ArrayGeometry kGnb{4, 4, 0.5, 2};

ChannelTap random_tap(Rng& rng, Index r, Index c) { return {0, complex_normal_matrix(rng, r, c)}; }

}  // namespace

TEST(DftCodebook, SingleElement) {
  const Codebook cb = dft_codebook({1, 1, 0.5, 1}, 1);
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_NEAR(std::abs(cb[0](0) - cdouble(1, 0)), 0.0, 1e-15);
}

TEST(DftCodebook, UlaIsOrthonormal) {
  const CMat m = dft_codebook({1, 4, 0.5, 1}, 1).matrix();
  EXPECT_LT((m.adjoint() * m - CMat::Identity(4, 4)).norm(), 1e-12);
}

TEST(DftCodebook, CountsAndNorms) {
  const Codebook a = dft_codebook({2, 2, 0.5, 1}, 2);
  EXPECT_EQ(a.size(), 16u);
  for (const auto& b : a.beams) EXPECT_NEAR(b.norm(), 1.0, 1e-12);
  EXPECT_EQ(dft_codebook(kGnb, 1).size(), 32u);
  EXPECT_EQ(dft_codebook(kGnb, 4).size(), 4u * 4 * 16 * 2);
  EXPECT_EQ(dft_codebook(kUe, 1).size(), 8u);
  EXPECT_THROW(dft_codebook(kUe, 0), std::invalid_argument);
}

TEST(DftCodebook, DualPolBasisIsUnitary) {
  const CMat m = dft_codebook(kGnb, 1).matrix();
  EXPECT_LT((m.adjoint() * m - CMat::Identity(32, 32)).norm(), 1e-12);
}

TEST(BeamformMeasure, ScalarChannel) {
  Rng rng(1);
  const ChannelTap h{0, CMat::Constant(1, 1, cdouble(0.3, -2.0))};
  const CMat one = CMat::Ones(1, 1);
  const CVec y = beamform_measure(h, one, one, 0.0, rng);
  ASSERT_EQ(y.size(), 1);
  EXPECT_EQ(y(0), cdouble(0.3, -2.0));
}

TEST(BeamformMeasure, MatchedBeamsGiveThePathGain) {
  Rng rng(1);
  PathParams p;
  p.gain = {0.7, 0.4};
  p.aoa_az = 45;
  p.aoa_zen = 85;
  p.aod_az = 115;
  p.aod_zen = 65;
  const ChannelTap h = build_channel_tap(std::vector<PathParams>{p}, kUe, kGnb);
  const CVec u = steering_vector(kUe, p.aoa_az, p.aoa_zen);
  const CVec v = steering_vector(kGnb, p.aod_az, p.aod_zen);
  const CVec y = beamform_measure(h, u, v, 0.0, rng);
  EXPECT_NEAR(std::abs(y(0) - p.gain), 0.0, 1e-12);
}

TEST(BeamformMeasure, ZeroBeamsGiveNoiseOnly) {
  Rng rng(2);
  const ChannelTap h = random_tap(rng, 8, 32);
  const CVec z8 = CVec::Zero(8), z32 = CVec::Zero(32);
  EXPECT_EQ(beamform_measure(h, z8, z32, 0.0, rng).norm(), 0.0);
  // Noise power per entry matches the requested variance.
  double acc = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) acc += beamform_measure(h, z8, z32, 0.5, rng).squaredNorm();
  EXPECT_NEAR(acc / n, 0.5, 0.02);
}

TEST(BeamformMeasure, MatrixBeamsAreVecOfProduct) {
  Rng rng(3);
  const ChannelTap h = random_tap(rng, 8, 32);
  const CMat u = complex_normal_matrix(rng, 8, 2);
  const CMat v = complex_normal_matrix(rng, 32, 3);
  const CVec y = beamform_measure(h, u, v, 0.0, rng);
  ASSERT_EQ(y.size(), 6);
  const CMat expect = u.adjoint() * h.matrix * v;
  for (Index j = 0; j < 3; ++j)
    for (Index i = 0; i < 2; ++i) EXPECT_NEAR(std::abs(y(j * 2 + i) - expect(i, j)), 0.0, 1e-12);
}

TEST(BeamformMeasure, DimensionMismatchThrows) {
  Rng rng(3);
  const ChannelTap h = random_tap(rng, 8, 32);
  EXPECT_THROW(beamform_measure(h, CVec::Ones(4), CVec::Ones(32), 0.0, rng), std::length_error);
}

namespace {

/// All pairs ranked by |u^H H v|^2 descending, ties lexicographic.
std::vector<std::tuple<double, int, int>> brute_force_rank(const ChannelTap& h, const Codebook& ue,
                                                           const Codebook& gnb) {
  std::vector<std::tuple<double, int, int>> all;
  for (std::size_t i = 0; i < ue.size(); ++i)
    for (std::size_t j = 0; j < gnb.size(); ++j) {
      cdouble g = 0.0;
      for (Index a = 0; a < h.matrix.rows(); ++a)
        for (Index b = 0; b < h.matrix.cols(); ++b) g += std::conj(ue[i](a)) * h.matrix(a, b) * gnb[j](b);
      all.emplace_back(std::norm(g), int(i), int(j));
    }
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return std::get<0>(x) > std::get<0>(y); });
  return all;
}

}  // namespace

TEST(RsrpRank, ExactSteeringPairRanksFirst) {
  const ArrayGeometry ue{1, 2, 0.5, 1};
  const ArrayGeometry gnb{1, 4, 0.5, 1};
  // Column phase step pi * cos(60 deg) = pi/2 is DFT frequency 1/4 (beam 1);
  // broadside at the UE is frequency 0 (beam 0).
  PathParams p;
  p.gain = 1.0;
  p.aoa_az = 90;
  p.aoa_zen = 90;
  p.aod_az = 60;
  p.aod_zen = 90;
  const ChannelTap h = build_channel_tap(std::vector<PathParams>{p}, ue, gnb);
  Rng rng(0);
  const auto top = rsrp_rank(h, dft_codebook(ue, 1), dft_codebook(gnb, 1), 1, 0.0, rng);
  EXPECT_EQ(top[0].ue_beam, 0);
  EXPECT_EQ(top[0].gnb_beam, 1);
  EXPECT_NEAR(top[0].rsrp_db, 0.0, 1e-9);
}

TEST(RsrpRank, MatchesBruteForce) {
  Rng rng(4);
  const Codebook ue = dft_codebook(kUe, 1), gnb = dft_codebook(kGnb, 1);
  for (int t = 0; t < 5; ++t) {
    const ChannelTap h = random_tap(rng, 8, 32);
    const auto got = rsrp_rank(h, ue, gnb, 10, 0.0, rng);
    const auto want = brute_force_rank(h, ue, gnb);
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_EQ(got[k].ue_beam, std::get<1>(want[k]));
      EXPECT_EQ(got[k].gnb_beam, std::get<2>(want[k]));
      EXPECT_NEAR(got[k].rsrp_db, lin2db(std::get<0>(want[k])), 1e-9);
    }
  }
}

TEST(RsrpRank, AllPairsSortedDescending) {
  Rng rng(5);
  const Codebook ue = dft_codebook(kUe, 1), gnb = dft_codebook(kGnb, 1);
  const ChannelTap h = random_tap(rng, 8, 32);
  const auto all = rsrp_rank(h, ue, gnb, int(ue.size() * gnb.size()), 0.0, rng);
  ASSERT_EQ(all.size(), ue.size() * gnb.size());
  for (std::size_t k = 1; k < all.size(); ++k) EXPECT_GE(all[k - 1].rsrp_db, all[k].rsrp_db);
  EXPECT_THROW(rsrp_rank(h, ue, gnb, int(all.size()) + 1, 0.0, rng), std::invalid_argument);
  EXPECT_THROW(rsrp_rank(h, ue, gnb, 0, 0.0, rng), std::invalid_argument);
}

TEST(RsrpRank, ZeroChannelKeepsLexicographicOrder) {
  Rng rng(6);
  const Codebook ue = dft_codebook({1, 2, 0.5, 1}, 1), gnb = dft_codebook({1, 3, 0.5, 1}, 1);
  const ChannelTap h{0, CMat::Zero(2, 3)};
  const auto all = rsrp_rank(h, ue, gnb, 6, 0.0, rng);
  for (int k = 0; k < 6; ++k) {
    EXPECT_EQ(all[std::size_t(k)].ue_beam, k / 3);
    EXPECT_EQ(all[std::size_t(k)].gnb_beam, k % 3);
  }
}

TEST(RsrpRank, InvariantUnderGlobalPhase) {
  Rng rng(7);
  const Codebook ue = dft_codebook(kUe, 1), gnb = dft_codebook(kGnb, 1);
  for (int t = 0; t < 5; ++t) {
    const ChannelTap h = random_tap(rng, 8, 32);
    const ChannelTap hr{0, std::polar(1.0, 0.3 + t) * h.matrix};
    const auto a = rsrp_rank(h, ue, gnb, 5, 0.0, rng);
    const auto b = rsrp_rank(hr, ue, gnb, 5, 0.0, rng);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(a[k].ue_beam, b[k].ue_beam);
      EXPECT_EQ(a[k].gnb_beam, b[k].gnb_beam);
      EXPECT_NEAR(a[k].rsrp_db, b[k].rsrp_db, 1e-9);
    }
  }
}

TEST(RsrpRank, TapSetAveragesPower) {
  Rng rng(8);
  const Codebook ue = dft_codebook({1, 2, 0.5, 1}, 1), gnb = dft_codebook({1, 2, 0.5, 1}, 1);
  const std::vector<ChannelTap> taps{random_tap(rng, 2, 2), random_tap(rng, 2, 2)};
  const auto top = rsrp_rank(taps, ue, gnb, 1, 0.0, rng);
  const auto p = std::size_t(top[0].ue_beam), q = std::size_t(top[0].gnb_beam);
  double power = 0.0;
  for (const auto& t : taps) power += std::norm(ue[p].dot(t.matrix * gnb[q]));
  EXPECT_NEAR(top[0].rsrp_db, lin2db(power / 2.0), 1e-9);
}

TEST(SensingMatrix, SinglePairMatchesKroneckerLayout) {
  Rng rng(9);
  const CVec u = complex_normal_vector(rng, 3);
  const CVec v = complex_normal_vector(rng, 4);
  SensingMatrix phi(3, 4);
  phi.add_block(u, v);
  const CMat d = phi.dense();
  ASSERT_EQ(d.rows(), 1);
  ASSERT_EQ(d.cols(), 12);
  // Entry for vec index i + 3 j is v_j * conj(u_i).
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(d(0, i + 3 * j) - v(j) * std::conj(u(i))), 0.0, 1e-14);
}

TEST(SensingMatrix, FivePairsGiveFiveRowsAndDuplicatesRepeat) {
  const Codebook ue = dft_codebook(kUe, 1), gnb = dft_codebook(kGnb, 1);
  const std::vector<BeamPair> pairs{{0, 1, 0}, {2, 3, 0}, {2, 3, 0}, {7, 31, 0}, {4, 0, 0}};
  const SensingMatrix phi = build_sensing_matrix(pairs, ue, gnb);
  EXPECT_EQ(phi.rows(), 5);
  EXPECT_EQ(phi.cols(), 8 * 32);
  const CMat d = phi.dense();
  EXPECT_EQ((d.row(1) - d.row(2)).norm(), 0.0);
  EXPECT_THROW(build_sensing_matrix(std::vector<BeamPair>{}, ue, gnb), std::invalid_argument);
}

TEST(SensingMatrix, OperatorMatchesDense) {
  Rng rng(10);
  SensingMatrix phi(2, 3);
  for (int b = 0; b < 3; ++b) phi.add_block(complex_normal_vector(rng, 2), complex_normal_vector(rng, 3));
  phi.add_block(complex_normal_matrix(rng, 2, 2), complex_normal_matrix(rng, 3, 2));
  const CMat d = phi.dense();
  ASSERT_EQ(d.rows(), phi.rows());
  for (int t = 0; t < 10; ++t) {
    const CVec v = complex_normal_vector(rng, 6);
    const CVec u = complex_normal_vector(rng, phi.rows());
    EXPECT_LT(rel_err(apply_phi(phi, v), CVec(d * v)), 1e-12);
    EXPECT_LT(rel_err(apply_phi_adj(phi, u), CVec(d.adjoint() * u)), 1e-12);
    // <Phi v, u> = <v, Phi^H u>
    const cdouble lhs = u.dot(apply_phi(phi, v));
    const cdouble rhs = apply_phi_adj(phi, u).dot(v);
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(lhs)));
  }
  EXPECT_EQ(apply_phi(phi, CVec::Zero(6)).norm(), 0.0);
  EXPECT_THROW(apply_phi(phi, CVec::Zero(5)), std::length_error);
  EXPECT_THROW(apply_phi_adj(phi, CVec::Zero(phi.rows() + 1)), std::length_error);
}

TEST(SensingMatrix, VecIdentity) {
  Rng rng(11);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int t = 0; t < 50; ++t) {
    const Index p = dim(rng), q = dim(rng), r = dim(rng), s = dim(rng);
    const CMat a = complex_normal_matrix(rng, p, q);
    const CMat x = complex_normal_matrix(rng, q, r);
    const CMat b = complex_normal_matrix(rng, r, s);
    const CVec lhs = vec(a * x * b);
    const CVec rhs = kron(b.transpose(), a) * vec(x);
    EXPECT_LT(rel_err(lhs, rhs), 1e-12);
  }
}

TEST(Measure, NoiselessZeroChannelIsZeroAndStackingMatchesDense) {
  Rng rng(12);
  const Codebook ue = dft_codebook(kUe, 1), gnb = dft_codebook(kGnb, 1);
  const std::vector<BeamPair> pairs{{0, 1, 0}, {2, 3, 0}, {5, 30, 0}};
  const SensingMatrix phi = build_sensing_matrix(pairs, ue, gnb);
  EXPECT_EQ(measure({0, CMat::Zero(8, 32)}, phi, 0.0, rng).norm(), 0.0);
  const ChannelTap h = random_tap(rng, 8, 32);
  EXPECT_LT(rel_err(measure(h, phi, 0.0, rng), CVec(phi.dense() * vec(h.matrix))), 1e-12);
}
