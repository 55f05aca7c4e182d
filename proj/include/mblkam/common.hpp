#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>

namespace mblkam {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Basis label of the 2^n tensor-product basis (bit b=0 is spin up).
using BasisIndex = std::uint64_t;

inline constexpr int kDefaultMaxSites = 14;

/// Dimension cap for dense work; `MBLKAM_MAX_N` overrides the default of 14.
inline int max_sites() {
  if (const char* env = std::getenv("MBLKAM_MAX_N")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && value >= 1 && value <= 30) return static_cast<int>(value);
    throw std::invalid_argument("MBLKAM_MAX_N must be an integer in [1, 30], got '" +
                                std::string(env) + "'");
  }
  return kDefaultMaxSites;
}

inline int hamming(BasisIndex a, BasisIndex b) { return std::popcount(a ^ b); }

// ---------------------------------------------------------------------------
// Matrix norms used for tolerances
// ---------------------------------------------------------------------------

/// Max absolute row sum. Bounds the spectral norm for symmetric matrices.
inline double inf_norm(const Matrix& m) {
  return m.rows() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double max_offdiagonal(const Matrix& m) {
  double best = 0.0;
  for (Index c = 0; c < m.cols(); ++c) {
    for (Index r = 0; r < m.rows(); ++r) {
      if (r != c) best = std::max(best, std::abs(m(r, c)));
    }
  }
  return best;
}

inline double orthogonality_defect(const Matrix& u) {
  const Matrix gram = u.transpose() * u;
  return max_abs(gram - Matrix::Identity(u.cols(), u.cols()));
}

inline double asymmetry(const Matrix& m) { return max_abs(m - m.transpose()); }

// ---------------------------------------------------------------------------
// Seeding and portable uniform variates
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stable per-stream seed: depends only on (master, stream), never on how many streams exist.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

/// Uniform on [0,1) with 53 random bits; identical on every standard library.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool coin(Rng& rng) { return (rng() >> 63) != 0; }

inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(bound)) % bound;
}

}  // namespace mblkam
