#include <mblkam/kam.hpp>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

using namespace mblkam;

namespace {

Matrix random_h(int n, double gamma, std::uint64_t seed) {
  DistributionSpec d;
  d.gamma = gamma;
  return build_hamiltonian(sample_disorder(d, ChainGeometry::centered(n), seed));
}

KamConfig desk_config(double gamma) {
  KamConfig c;
  c.gamma = gamma;
  c.epsilon_exponent = 0.5;
  return c;
}

}  // namespace

TEST(Schedule, BandsFollowGeometricScales) {
  const auto s = scale_bands(15.0 / 8.0, 4);
  ASSERT_EQ(s.bands.size(), 5u);
  EXPECT_EQ(s.bands[0].distances, std::vector<int>({1}));
  EXPECT_EQ(s.bands[1].distances, std::vector<int>({2, 3}));
  EXPECT_EQ(s.bands[2].distances, std::vector<int>({4, 5, 6}));
  EXPECT_EQ(s.bands[3].distances, std::vector<int>({7, 8, 9, 10, 11, 12}));
  EXPECT_DOUBLE_EQ(s.bands[2].lower, std::pow(15.0 / 8.0, 2));
  EXPECT_EQ(s.band_of(5), 2);
  EXPECT_EQ(s.band_of(1000), -1);
  EXPECT_THROW(scale_bands(1.0, 3), std::invalid_argument);
}

TEST(Schedule, IntegerGrowthHasNoRoundoffGaps) {
  const auto s = scale_bands(2.0, 3);
  EXPECT_EQ(s.bands[1].distances, std::vector<int>({2, 3}));
  EXPECT_EQ(s.bands[2].distances, std::vector<int>({4, 5, 6, 7}));
}

TEST(Generator, TwoByTwoEntry) {
  Matrix h(2, 2);
  h << 1.0, 0.05, 0.05, -0.5;
  const auto band = scale_bands(15.0 / 8.0, 0).bands[0];
  const auto g = build_generator(h, band, 1.0);
  EXPECT_TRUE(g.resonant_pairs.empty());
  const Matrix a = g.dense();
  EXPECT_NEAR(a(0, 1), 0.05 / 1.5, 1e-16);
  EXPECT_NEAR(a(1, 0), -0.05 / 1.5, 1e-16);
}

TEST(Generator, ResonantPairsAreExcluded) {
  Matrix h(2, 2);
  h << 0.01, 0.05, 0.05, -0.01;
  const auto band = scale_bands(15.0 / 8.0, 0).bands[0];
  const auto g = build_generator(h, band, 0.1);
  ASSERT_EQ(g.resonant_pairs.size(), 1u);
  EXPECT_TRUE(g.is_zero());
  Matrix degenerate(2, 2);
  degenerate << 0.0, 1e-3, 1e-3, 0.0;
  EXPECT_EQ(build_generator(degenerate, band, 1e6).resonant_pairs.size(), 1u);
}

TEST(Generator, OnlyBandDistancesAreSelected) {
  const Matrix h = random_h(4, 0.1, 2);
  const auto bands = scale_bands(15.0 / 8.0, 2).bands;
  EXPECT_GT(offdiagonal_band(h, bands[0], 0.0).size(), 0u);
  EXPECT_EQ(offdiagonal_band(h, bands[1], 0.0).size(), 0u);
  EXPECT_EQ(band_max(h, bands[1]), 0.0);
}

TEST(Rotation, MatchesDenseMatrixExponential) {
  const Matrix h = random_h(5, 0.2, 9);
  const auto band = scale_bands(15.0 / 8.0, 0).bands[0];
  const auto g = build_generator(h, band, 10.0);
  const Matrix a = g.dense();
  const Matrix ea = a.exp();
  const Matrix expected = ea * h * ea.transpose();
  EXPECT_LE(max_abs(rotate(h, g) - expected), 1e-13);
  EXPECT_LE(max_abs(exponential(g) - ea), 1e-14);
  Matrix u = Matrix::Identity(h.rows(), h.cols());
  rotate_frame(u, g);
  EXPECT_LE(max_abs(u - ea.transpose()), 1e-14);
}

TEST(Rotation, LargeGeneratorsAreSplit) {
  Matrix h(2, 2);
  h << 1.0, 10.0, 10.0, -1.0;
  const auto band = scale_bands(15.0 / 8.0, 0).bands[0];
  const auto g = build_generator(h, band, 10.0);
  SeriesReport report;
  const Matrix r = rotate(h, g, {}, &report);
  const Matrix ea = g.dense().exp();
  EXPECT_GT(report.splits, 0);
  EXPECT_LE(max_abs(r - ea * h * ea.transpose()), 1e-13);
}

TEST(Rotation, FirstOrderCancellationOnTwoLevels) {
  const auto band = scale_bands(15.0 / 8.0, 0).bands[0];
  for (double de : {0.5, 1.0, 2.0}) {
    for (double ratio : {0.01, 0.05, 0.1}) {
      const double j = ratio * de;
      Matrix h(2, 2);
      h << de / 2, j, j, -de / 2;
      const Matrix r = rotate(h, build_generator(h, band, 1.0));
      EXPECT_LE(std::abs(r(0, 1)), 2.0 * std::abs(j) * ratio);
      EXPECT_LE(asymmetry(r), 1e-15);
    }
  }
}

TEST(Blocks, SingleResonanceIsFattenedByItsScale) {
  const auto g = ChainGeometry::centered(9);
  const std::vector<int> sites{0};
  auto blocks = form_blocks(sites, g, 1.0, 1.0);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].core_sites, std::vector<int>({0}));
  EXPECT_EQ(blocks[0].fattened_first, -1);
  EXPECT_EQ(blocks[0].fattened_last, 1);
  blocks = form_blocks(sites, g, 3.5, 1.0);
  EXPECT_EQ(blocks[0].fattened_first, -3);
  EXPECT_EQ(blocks[0].fattened_last, 3);
}

TEST(Blocks, NearbyBlocksMergeByVolumeRule) {
  const auto g = ChainGeometry::centered(15);
  const std::vector<int> close{0, 2};
  auto blocks = form_blocks(close, g, 1.0, 1.0);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].core_sites, std::vector<int>({0, 2}));

  const std::vector<int> far{-6, 6};
  blocks = form_blocks(far, g, 1.0, 1.0);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].fattened_first, -7);
  EXPECT_EQ(blocks[1].fattened_last, 7);
}

TEST(Blocks, AdjacentFattenedBlocksUnite) {
  const auto g = ChainGeometry::centered(15);
  const std::vector<int> sites{0, 3};
  const auto blocks = form_blocks(sites, g, 1.0, 0.0);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].core_sites, std::vector<int>({0, 3}));
  EXPECT_EQ(blocks[0].fattened_first, -1);
  EXPECT_EQ(blocks[0].fattened_last, 4);
}

TEST(Blocks, ResonanceHullSpansFlips) {
  const auto g = ChainGeometry::centered(5);
  const BasisPair p{0, g.bit(-1) | g.bit(1)};
  const auto r = resonance_of(p, g, 2.0);
  EXPECT_EQ(r.first_site, -1);
  EXPECT_EQ(r.last_site, 1);
  EXPECT_THROW(resonance_of({3, 3}, g, 1.0), std::invalid_argument);
}

TEST(Metaspin, PermutationIsInverted) {
  Matrix v = Matrix::Zero(3, 3);
  v(2, 0) = 1.0;
  v(0, 1) = -1.0;
  v(1, 2) = 1.0;
  const auto a = greedy_metaspin_assignment(v);
  EXPECT_EQ(a, std::vector<Index>({1, 2, 0}));
}

TEST(Metaspin, ConflictsResolvedGlobally) {
  Matrix v(2, 2);
  const double c = std::sqrt(0.8), s = std::sqrt(0.2);
  v << c, s, s, -c;
  EXPECT_EQ(greedy_metaspin_assignment(v), std::vector<Index>({0, 1}));
  // both columns prefer row 0; the larger overlap wins it
  Matrix w(2, 2);
  w << 0.9, std::sqrt(0.5), std::sqrt(1 - 0.81), -std::sqrt(0.5);
  EXPECT_EQ(greedy_metaspin_assignment(w), std::vector<Index>({0, 1}));
}

TEST(BlockRotation, RemovesInternalOffDiagonals) {
  const auto g = ChainGeometry::centered(5);
  Matrix h = random_h(5, 0.3, 4);
  const auto rot = block_rotation(h, g, -1, 0);
  EXPECT_EQ(rot.sector_size(), 4);
  EXPECT_EQ(rot.exteriors.size(), 8u);
  const Matrix o = rot.dense(h.rows());
  EXPECT_LE(orthogonality_defect(o), 1e-14);
  Matrix conj = h;
  rot.conjugate(conj);
  EXPECT_LE(max_abs(conj - o.transpose() * h * o), 1e-13);
  EXPECT_LE(block_internal_max(conj, g, -1, 0), 1e-13);
  EXPECT_GT(block_internal_max(h, g, -1, 0), 0.01);
}

TEST(Kam, ZeroGammaIsAlreadyDiagonal) {
  const Matrix h = random_h(6, 0.0, 1);
  const auto res = diagonalize_kam(h, ChainGeometry::centered(6), desk_config(0.0));
  EXPECT_TRUE(res.converged);
  EXPECT_TRUE(res.steps.empty());
  EXPECT_EQ(res.u, Matrix::Identity(64, 64));
  EXPECT_EQ(res.final_diagonal, h.diagonal());
}

TEST(Kam, MatchesOracleOnSmallBatch) {
  for (int n : {3, 5, 7}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto g = ChainGeometry::centered(n);
      const Matrix h = random_h(n, 0.05, seed);
      const auto res = diagonalize_kam(h, g, desk_config(0.05));
      ASSERT_TRUE(res.converged) << res.message;
      EXPECT_LE(sorted_max_difference(res.final_diagonal, eigenvalues(h)), 1e-10 * inf_norm(h));
      EXPECT_LE(orthogonality_defect(res.u), 1e-12);
      const Matrix d = res.u.transpose() * h * res.u;
      EXPECT_LE(max_offdiagonal(d), 1e-10 * inf_norm(h));
    }
  }
}

TEST(Kam, LabelsFollowDominantConfiguration) {
  const auto g = ChainGeometry::centered(6);
  const Matrix h = random_h(6, 0.005, 21);
  const auto res = diagonalize_kam(h, g, desk_config(0.005));
  ASSERT_TRUE(res.converged);
  int matched = 0;
  for (Index s = 0; s < h.rows(); ++s) {
    Index best = 0;
    res.u.col(s).cwiseAbs().maxCoeff(&best);
    matched += best == s ? 1 : 0;
  }
  EXPECT_EQ(matched, h.rows());
}

TEST(Kam, StepBudgetExhaustionIsReported) {
  const auto g = ChainGeometry::centered(5);
  const Matrix h = random_h(5, 0.05, 2);
  auto cfg = desk_config(0.05);
  cfg.k_max = 0;
  const auto res = diagonalize_kam(h, g, cfg);
  EXPECT_FALSE(res.converged);
  EXPECT_FALSE(res.message.empty());
}

TEST(Kam, FullyResonantFallbackStillDiagonalizes) {
  const auto g = ChainGeometry::centered(4);
  DistributionSpec d;
  d.gamma = 1.0;
  const Matrix h = build_hamiltonian(sample_disorder(d, g, 5));
  const auto res = diagonalize_kam(h, g, desk_config(1.0));
  ASSERT_TRUE(res.converged);
  EXPECT_TRUE(res.fully_resonant);
  EXPECT_LE(sorted_max_difference(res.final_diagonal, eigenvalues(h)), 1e-12 * inf_norm(h));
}

TEST(Kam, ConfigValidation) {
  KamConfig c;
  c.growth = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  KamConfig d;
  d.tol_offdiag = 0.0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  KamConfig e;
  e.gamma = 0.01;
  e.epsilon_exponent = 0.5;
  EXPECT_NEAR(e.cutoff_ratio(), 0.1, 1e-15);
  e.rho = 0.3;
  EXPECT_EQ(e.cutoff_ratio(), 0.3);
}

TEST(Kam, RejectsMismatchedDimension) {
  EXPECT_THROW(diagonalize_kam(Matrix::Identity(4, 4), ChainGeometry::centered(3), KamConfig{}),
               std::invalid_argument);
}
