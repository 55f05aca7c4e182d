#include <mblkam/oracle.hpp>

#include <gtest/gtest.h>

using namespace mblkam;

namespace {

DisorderRealization fixed_realization() {
  DisorderRealization r;
  r.geometry = ChainGeometry(1, 1);
  r.fields = {0.35, -0.7, 0.45};
  r.transverse = {0.2, -0.5, 0.9};
  r.exchanges = {0.1, -0.4, 0.8, 0.25};
  r.gamma = 0.1;
  return r;
}

// H assembled term by term from Kronecker products, exterior spins fixed at +1.
Matrix kron_hamiltonian(const DisorderRealization& r) {
  const auto& g = r.geometry;
  const auto dim = static_cast<Index>(g.dimension());
  Matrix h = Matrix::Zero(dim, dim);
  for (int i = g.first_site(); i <= g.last_site(); ++i) {
    h += r.field(i) * kron_operator({{i, pauli::z()}}, g);
    h += r.transverse_coupling(i) * kron_operator({{i, pauli::x()}}, g);
  }
  for (int i = g.first_site(); i < g.last_site(); ++i) {
    h += r.exchange(i) * kron_operator({{i, pauli::z()}, {i + 1, pauli::z()}}, g);
  }
  h += r.exchange(g.first_site() - 1) * kron_operator({{g.first_site(), pauli::z()}}, g);
  h += r.exchange(g.last_site()) * kron_operator({{g.last_site(), pauli::z()}}, g);
  return h;
}

}  // namespace

TEST(Geometry, CenteredChains) {
  const auto g = ChainGeometry::centered(6);
  EXPECT_EQ(g.left_end, 2);
  EXPECT_EQ(g.right_end, 3);
  EXPECT_EQ(g.size(), 6);
  EXPECT_EQ(g.dimension(), 64u);
  EXPECT_TRUE(g.contains(0));
  EXPECT_EQ(ChainGeometry::centered(1).size(), 1);
  EXPECT_THROW(ChainGeometry::centered(0), std::invalid_argument);
  EXPECT_THROW(ChainGeometry(-1, 2), std::invalid_argument);
}

TEST(Geometry, LeftmostSiteIsMostSignificantBit) {
  const ChainGeometry g(1, 1);
  EXPECT_EQ(g.bit(-1), 4u);
  EXPECT_EQ(g.bit(0), 2u);
  EXPECT_EQ(g.bit(1), 1u);
  EXPECT_THROW(g.require_site(2), std::out_of_range);
}

TEST(Geometry, DenseCapHonorsEnvironment) {
  EXPECT_THROW(ChainGeometry::centered(15).require_dense_capacity(), std::length_error);
  setenv("MBLKAM_MAX_N", "16", 1);
  EXPECT_NO_THROW(ChainGeometry::centered(15).require_dense_capacity());
  setenv("MBLKAM_MAX_N", "abc", 1);
  EXPECT_THROW(max_sites(), std::invalid_argument);
  unsetenv("MBLKAM_MAX_N");
  EXPECT_EQ(max_sites(), kDefaultMaxSites);
}

TEST(Spins, ExteriorIsFrozenUp) {
  const ChainGeometry g(1, 1);
  const auto s = SpinConfiguration::from_spins(g, {-1, 1, -1});
  EXPECT_EQ(s.bits, 5u);
  EXPECT_EQ(s.spin(g, -1), -1);
  EXPECT_EQ(s.spin(g, 0), 1);
  EXPECT_EQ(s.spin(g, -2), 1);
  EXPECT_EQ(s.spin(g, 2), 1);
  EXPECT_EQ(s.flipped(g, 0).bits, 7u);
  EXPECT_THROW(SpinConfiguration::from_spins(g, {1, 0, 1}), std::invalid_argument);
  EXPECT_THROW(SpinConfiguration::from_spins(g, {1, 1}), std::invalid_argument);
}

TEST(Distribution, ValidationAndSampling) {
  EXPECT_THROW(Distribution::uniform(1.0, 1.0).validate("x"), std::invalid_argument);
  EXPECT_THROW(Distribution::uniform(0.0, INFINITY).validate("x"), std::invalid_argument);
  EXPECT_NO_THROW(Distribution::constant(0.0).validate("x"));
  Rng rng(5);
  const auto d = Distribution::uniform(-2.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    const double x = d.sample(rng);
    EXPECT_GE(x, -2.0);
    EXPECT_LT(x, 3.0);
  }
  EXPECT_EQ(Distribution::constant(0.25).sample(rng), 0.25);
  DistributionSpec spec;
  spec.gamma = -0.1;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Disorder, SamplingIsSeedDeterministic) {
  const DistributionSpec spec;
  const auto g = ChainGeometry::centered(5);
  const auto a = sample_disorder(spec, g, 42);
  const auto b = sample_disorder(spec, g, 42);
  const auto c = sample_disorder(spec, g, 43);
  EXPECT_EQ(a.fields, b.fields);
  EXPECT_EQ(a.exchanges, b.exchanges);
  EXPECT_NE(a.fields, c.fields);
  EXPECT_EQ(a.exchanges.size(), 6u);
  EXPECT_EQ(a.gamma, spec.gamma);
}

TEST(Disorder, UniformVariateMatchesReferenceBits) {
  Rng rng(1);
  const auto raw = Rng(1)();
  EXPECT_EQ(uniform01(rng), static_cast<double>(raw >> 11) * 0x1.0p-53);
}

TEST(Disorder, StreamSeedsAreStable) {
  EXPECT_EQ(stream_seed(7, 3), stream_seed(7, 3));
  EXPECT_NE(stream_seed(7, 3), stream_seed(7, 4));
  EXPECT_NE(stream_seed(7, 3), stream_seed(8, 3));
}

TEST(Energy, ClassicalEnergiesMatchDirectSum) {
  const auto r = fixed_realization();
  const Vector e = classical_energies(r);
  for (BasisIndex s = 0; s < r.geometry.dimension(); ++s) {
    EXPECT_NEAR(e(static_cast<Index>(s)), classical_energy(r, {s}), 1e-14);
  }
  // all up: sum h + J_{-2} + J_{-1} + J_0 + J_1
  EXPECT_NEAR(classical_energy(r, {0}), 0.35 - 0.7 + 0.45 + 0.1 - 0.4 + 0.8 + 0.25, 1e-14);
}

TEST(Energy, SingleFlipDeltaIsEnergyDifference) {
  const auto r = fixed_realization();
  const auto& g = r.geometry;
  for (BasisIndex s = 0; s < g.dimension(); ++s) {
    for (int i = g.first_site(); i <= g.last_site(); ++i) {
      const SpinConfiguration sigma{s};
      EXPECT_NEAR(single_flip_delta(r, sigma, i),
                  classical_energy(r, sigma) - classical_energy(r, sigma.flipped(g, i)), 1e-14);
    }
  }
}

TEST(Energy, ZeroFieldsAndCouplingsGiveZero) {
  auto r = fixed_realization();
  std::fill(r.fields.begin(), r.fields.end(), 0.0);
  std::fill(r.exchanges.begin(), r.exchanges.end(), 0.0);
  EXPECT_EQ(classical_energies(r).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Resonance, MinFlipGapOverNeighbors) {
  const auto r = fixed_realization();
  const auto& g = r.geometry;
  for (int i = g.first_site(); i <= g.last_site(); ++i) {
    double best = INFINITY;
    for (BasisIndex s = 0; s < g.dimension(); ++s) best = std::min(best, std::abs(single_flip_delta(r, {s}, i)));
    EXPECT_NEAR(min_flip_gap(r, i), best, 1e-14);
  }
  EXPECT_THROW(is_resonant_site(r, 0, 0.0), std::invalid_argument);
  EXPECT_TRUE(is_resonant_site(r, 0, 10.0));
  EXPECT_EQ(count_resonant_sites(r, 1e-9), 0);
}

TEST(Resonance, ThresholdIsPowerOfGamma) {
  EXPECT_NEAR(resonance_threshold(0.01, 0.5), 0.1, 1e-15);
  EXPECT_NEAR(resonance_threshold(0.01, 1.0 / 20.0), std::pow(0.01, 0.05), 1e-15);
}

TEST(Hamiltonian, MatchesKroneckerConstruction) {
  const auto r = fixed_realization();
  const Matrix h = build_hamiltonian(r);
  EXPECT_LE(max_abs(h - kron_hamiltonian(r)), 1e-14);
  EXPECT_EQ(asymmetry(h), 0.0);
}

TEST(Hamiltonian, RandomRealizationMatchesKron) {
  const auto r = sample_disorder({}, ChainGeometry::centered(5), 11);
  EXPECT_LE(max_abs(build_hamiltonian(r) - kron_hamiltonian(r)), 1e-14);
}

TEST(Hamiltonian, SingleSiteClosedForm) {
  DisorderRealization r;
  r.geometry = ChainGeometry(0, 0);
  r.fields = {0.5};
  r.transverse = {0.3};
  r.exchanges = {0.0, 0.0};
  r.gamma = 0.2;
  const Matrix h = build_hamiltonian(r);
  EXPECT_DOUBLE_EQ(h(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(h(1, 1), -0.5);
  EXPECT_DOUBLE_EQ(h(0, 1), 0.2 * 0.3);
}

TEST(Hamiltonian, RejectsShapeMismatch) {
  auto r = fixed_realization();
  r.exchanges.pop_back();
  EXPECT_THROW(build_hamiltonian(r), std::invalid_argument);
}
