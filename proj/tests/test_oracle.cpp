#include <mblkam/oracle.hpp>

#include <gtest/gtest.h>

using namespace mblkam;

TEST(Oracle, TwoByTwoClosedForm) {
  Matrix h(2, 2);
  h << 0.7, 0.2, 0.2, -0.4;
  const auto s = diagonalize(h);
  const double mean = 0.15, half = std::hypot(0.55, 0.2);
  EXPECT_NEAR(s.eigenvalues(0), mean - half, 1e-15);
  EXPECT_NEAR(s.eigenvalues(1), mean + half, 1e-15);
  EXPECT_LE(orthogonality_defect(s.eigenvectors), 1e-15);
  EXPECT_LE(max_abs(s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose() - h), 1e-15);
}

TEST(Oracle, DiagonalInputIsSorted) {
  const Vector d = (Vector(4) << 3.0, -1.0, 2.0, 0.5).finished();
  const Vector e = eigenvalues(d.asDiagonal());
  EXPECT_EQ(e, (Vector(4) << -1.0, 0.5, 2.0, 3.0).finished());
}

TEST(Oracle, ReconstructsRandomHamiltonian) {
  const auto r = sample_disorder({}, ChainGeometry::centered(6), 3);
  const Matrix h = build_hamiltonian(r);
  const auto s = diagonalize(h);
  const Matrix recon = s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose();
  EXPECT_LE(max_abs(recon - h), 1e-13);
  EXPECT_LE(orthogonality_defect(s.eigenvectors), 1e-13);
  EXPECT_LE((eigenvalues(h) - s.eigenvalues).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_NEAR(s.eigenvalues.sum(), h.trace(), 1e-12);
}

TEST(Oracle, RejectsBadInput) {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  EXPECT_THROW(diagonalize(a), std::invalid_argument);
  EXPECT_THROW(diagonalize(Matrix(2, 3)), std::invalid_argument);
  Matrix nan = Matrix::Zero(2, 2);
  nan(0, 0) = std::nan("");
  EXPECT_THROW(eigenvalues(nan), std::invalid_argument);
}

TEST(Oracle, LevelSpacing) {
  const Vector e = (Vector(4) << -1.0, 0.0, 0.25, 2.0).finished();
  EXPECT_DOUBLE_EQ(min_level_spacing(e), 0.25);
  EXPECT_THROW(min_level_spacing(Vector(1)), std::invalid_argument);
  EXPECT_DOUBLE_EQ(sorted_max_difference((Vector(2) << 2.0, 1.0).finished(), (Vector(2) << 1.0, 2.5).finished()), 0.5);
}

TEST(Oracle, EigenstateExpectation) {
  Matrix h(2, 2);
  h << 1.0, 0.0, 0.0, -1.0;
  const auto s = diagonalize(h);
  const Matrix z = pauli::z();
  EXPECT_NEAR(eigenstate_expectation(z, s, 0), -1.0, 1e-15);
  EXPECT_NEAR(eigenstate_expectation(z, s, 1), 1.0, 1e-15);
  EXPECT_THROW(eigenstate_expectation(z, s, 2), std::out_of_range);
}

TEST(Kron, SingleSiteOperatorsOnTwoSites) {
  const ChainGeometry g(0, 1);
  const Matrix z0 = kron_operator({{0, pauli::z()}}, g);
  EXPECT_EQ(z0.diagonal(), (Vector(4) << 1, 1, -1, -1).finished());
  const Matrix x1 = kron_operator({{1, pauli::x()}}, g);
  EXPECT_EQ(x1(0, 1), 1.0);
  EXPECT_EQ(x1(2, 3), 1.0);
  EXPECT_EQ(x1(0, 2), 0.0);
  EXPECT_EQ(sz_diagonal(g, 0), z0.diagonal());
  EXPECT_EQ(kron_operator({}, g), Matrix::Identity(4, 4));
}

TEST(Kron, ProductsCommuteOnDistinctSites) {
  const auto g = ChainGeometry::centered(4);
  const Matrix a = kron_operator({{-1, pauli::x()}}, g);
  const Matrix b = kron_operator({{1, pauli::z()}}, g);
  EXPECT_EQ(max_abs(a * b - kron_operator({{-1, pauli::x()}, {1, pauli::z()}}, g)), 0.0);
  EXPECT_EQ(max_abs(a * b - b * a), 0.0);
}

TEST(Kron, RejectsDuplicatesAndOutsideSites) {
  const auto g = ChainGeometry::centered(3);
  EXPECT_THROW(kron_operator({{0, pauli::x()}, {0, pauli::z()}}, g), std::invalid_argument);
  EXPECT_THROW(kron_operator({{5, pauli::x()}}, g), std::out_of_range);
}
