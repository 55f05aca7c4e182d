#pragma once

// Dense exact diagonalization. Every eigen-quantity the library reports as
// "truth" is routed through this header.

#include <mblkam/model.hpp>

#include <lapacke.h>

#include <algorithm>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mblkam {

struct Spectrum {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // column a pairs with eigenvalue a
};

namespace detail {

inline void require_symmetric(const Matrix& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("matrix is not square");
  if (!h.allFinite()) throw std::invalid_argument("matrix has non-finite entries");
  const double scale = std::max(1.0, max_abs(h));
  if (asymmetry(h) > 1e-12 * scale) throw std::invalid_argument("matrix is not symmetric");
}

inline Vector syevd(Matrix& a, char jobz) {
  const auto n = static_cast<lapack_int>(a.rows());
  Vector w(a.rows());
  if (n == 0) return w;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, jobz, 'U', n, a.data(), n, w.data());
  if (info != 0) {
    throw std::runtime_error("symmetric eigensolver failed to converge (dsyevd info=" +
                             std::to_string(info) + ")");
  }
  return w;
}

}  // namespace detail

inline Spectrum diagonalize(const Matrix& h) {
  detail::require_symmetric(h);
  Spectrum s;
  s.eigenvectors = h;
  s.eigenvalues = detail::syevd(s.eigenvectors, 'V');
  return s;
}

/// Eigenvalues only, ascending.
inline Vector eigenvalues(const Matrix& h) {
  detail::require_symmetric(h);
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("symmetric eigenvalue iteration failed to converge");
  return solver.eigenvalues();
}

inline double min_level_spacing(const Vector& ascending) {
  if (ascending.size() < 2) throw std::invalid_argument("level spacing needs at least two levels");
  double best = std::numeric_limits<double>::infinity();
  for (Index a = 0; a + 1 < ascending.size(); ++a) {
    best = std::min(best, ascending(a + 1) - ascending(a));
  }
  return std::max(best, 0.0);
}

inline double min_level_spacing(const Spectrum& s) { return min_level_spacing(s.eigenvalues); }

inline double eigenstate_expectation(const Matrix& op, const Spectrum& s, Index alpha) {
  if (op.rows() != s.eigenvectors.rows() || op.cols() != s.eigenvectors.rows()) {
    throw std::invalid_argument("operator dimension does not match the spectrum");
  }
  if (alpha < 0 || alpha >= s.eigenvectors.cols()) throw std::out_of_range("eigenstate index out of range");
  const auto v = s.eigenvectors.col(alpha);
  return v.dot(op * v);
}

/// Max |E_kam - E_oracle| after sorting both.
inline double sorted_max_difference(Vector a, Vector b) {
  if (a.size() != b.size()) throw std::invalid_argument("spectra differ in length");
  std::sort(a.data(), a.data() + a.size());
  std::sort(b.data(), b.data() + b.size());
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Single-site operators and tensor products
// ---------------------------------------------------------------------------

namespace pauli {
inline Eigen::Matrix2d identity() { return Eigen::Matrix2d::Identity(); }
inline Eigen::Matrix2d x() { return (Eigen::Matrix2d() << 0, 1, 1, 0).finished(); }
inline Eigen::Matrix2d z() { return (Eigen::Matrix2d() << 1, 0, 0, -1).finished(); }
}  // namespace pauli

struct SiteOperator {
  int site = 0;
  Eigen::Matrix2d matrix = Eigen::Matrix2d::Identity();
};

/// Tensor product over the chain, identity on unlisted sites. Local basis
/// order is (up, down), i.e. bit 0 then bit 1.
inline Matrix kron_operator(std::span<const SiteOperator> ops, const ChainGeometry& g) {
  g.require_dense_capacity();
  std::set<int> seen;
  for (const auto& op : ops) {
    g.require_site(op.site);
    if (!seen.insert(op.site).second) {
      throw std::invalid_argument("duplicate site " + std::to_string(op.site) + " in operator product");
    }
  }
  Matrix result = Matrix::Ones(1, 1);
  for (int p = 0; p < g.size(); ++p) {
    Eigen::Matrix2d local = pauli::identity();
    for (const auto& op : ops) {
      if (g.position(op.site) == p) local = op.matrix;
    }
    Matrix next(result.rows() * 2, result.cols() * 2);
    for (Index r = 0; r < result.rows(); ++r) {
      for (Index c = 0; c < result.cols(); ++c) {
        next.block<2, 2>(2 * r, 2 * c) = result(r, c) * local;
      }
    }
    result = std::move(next);
  }
  return result;
}

inline Matrix kron_operator(std::initializer_list<SiteOperator> ops, const ChainGeometry& g) {
  return kron_operator(std::span<const SiteOperator>(ops.begin(), ops.size()), g);
}

/// Diagonal of S^z_site as a vector over basis labels.
inline Vector sz_diagonal(const ChainGeometry& g, int site) {
  g.require_site(site);
  const BasisIndex mask = g.bit(site);
  Vector d(static_cast<Index>(g.dimension()));
  for (BasisIndex s = 0; s < g.dimension(); ++s) d(static_cast<Index>(s)) = (s & mask) ? -1.0 : 1.0;
  return d;
}

}  // namespace mblkam
