#pragma once

// Eigenstate diagnostics: magnetizations, connected correlators, l-bit
// operators and their Pauli-weight locality profiles.

#include <mblkam/oracle.hpp>

#include <complex>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace mblkam {

inline constexpr int kPauliMaxSites = 8;

// ---------------------------------------------------------------------------
// Pauli-string decomposition
// ---------------------------------------------------------------------------

/// Coefficients c_P = Tr(P op) / 2^n for every Pauli string P. A string is coded
/// in base 4 with position 0 (site -K) as the most significant digit and
/// digits I=0, X=1, Y=2, Z=3.
struct PauliDecomposition {
  int sites = 0;
  std::vector<std::complex<double>> coefficients;

  std::size_t string_count() const { return coefficients.size(); }

  int digit(std::size_t code, int position) const {
    return static_cast<int>((code >> (2 * (sites - 1 - position))) & 3U);
  }

  std::string label(std::size_t code) const {
    static constexpr char kLetters[] = {'I', 'X', 'Y', 'Z'};
    std::string s(static_cast<std::size_t>(sites), 'I');
    for (int p = 0; p < sites; ++p) s[p] = kLetters[digit(code, p)];
    return s;
  }

  std::size_t code_of(const std::string& label) const {
    if (static_cast<int>(label.size()) != sites) throw std::invalid_argument("Pauli label has the wrong length");
    std::size_t code = 0;
    for (char c : label) {
      const auto pos = std::string("IXYZ").find(c);
      if (pos == std::string::npos) throw std::invalid_argument("Pauli label must use I, X, Y, Z");
      code = code * 4 + pos;
    }
    return code;
  }

  std::complex<double> operator[](const std::string& label) const { return coefficients.at(code_of(label)); }

  /// Positions carrying a non-identity factor, as a bit set over positions.
  unsigned support(std::size_t code) const {
    unsigned s = 0;
    for (int p = 0; p < sites; ++p) {
      if (digit(code, p) != 0) s |= 1U << p;
    }
    return s;
  }

  double total_weight() const {
    double w = 0.0;
    for (const auto& c : coefficients) w += std::norm(c);
    return w;
  }
};

namespace detail {

// Bit masks (in basis-label bits) of the X-part and Z-part of a Pauli string.
inline void pauli_masks(const PauliDecomposition& d, std::size_t code, BasisIndex& x, BasisIndex& z, int& ys) {
  x = z = 0;
  ys = 0;
  for (int p = 0; p < d.sites; ++p) {
    const int letter = d.digit(code, p);
    const BasisIndex bit = BasisIndex{1} << (d.sites - 1 - p);
    if (letter == 1 || letter == 2) x |= bit;
    if (letter == 2 || letter == 3) z |= bit;
    if (letter == 2) ++ys;
  }
}

inline std::complex<double> i_power(int k) {
  static const std::complex<double> kPowers[] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  return kPowers[k & 3];
}

}  // namespace detail

inline PauliDecomposition pauli_decompose(const Matrix& op, const ChainGeometry& g) {
  const int n = g.size();
  if (n > kPauliMaxSites) {
    throw std::length_error("Pauli decomposition is capped at " + std::to_string(kPauliMaxSites) + " sites");
  }
  const auto dim = g.dimension();
  if (static_cast<BasisIndex>(op.rows()) != dim || static_cast<BasisIndex>(op.cols()) != dim) {
    throw std::invalid_argument("operator dimension does not match the chain");
  }
  PauliDecomposition d;
  d.sites = n;
  d.coefficients.resize(std::size_t{1} << (2 * n));
  for (std::size_t code = 0; code < d.coefficients.size(); ++code) {
    BasisIndex x = 0, z = 0;
    int ys = 0;
    detail::pauli_masks(d, code, x, z, ys);
    // P = i^{#Y} X^x Z^z, so Tr(P op) = i^{#Y} sum_b (-1)^{|b & z|} op(b, b ^ x).
    double trace = 0.0;
    for (BasisIndex b = 0; b < dim; ++b) {
      const double v = op(static_cast<Index>(b), static_cast<Index>(b ^ x));
      trace += (std::popcount(b & z) & 1) ? -v : v;
    }
    d.coefficients[code] = detail::i_power(ys) * (trace / static_cast<double>(dim));
  }
  return d;
}

/// Sum_P c_P P as a complex matrix.
inline Eigen::MatrixXcd pauli_reconstruct(const PauliDecomposition& d) {
  const auto dim = static_cast<Index>(BasisIndex{1} << d.sites);
  Eigen::MatrixXcd op = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::size_t code = 0; code < d.coefficients.size(); ++code) {
    if (d.coefficients[code] == 0.0) continue;
    BasisIndex x = 0, z = 0;
    int ys = 0;
    detail::pauli_masks(d, code, x, z, ys);
    const auto phase = detail::i_power(ys) * d.coefficients[code];
    for (BasisIndex b = 0; b < static_cast<BasisIndex>(dim); ++b) {
      const double sign = (std::popcount(b & z) & 1) ? -1.0 : 1.0;
      op(static_cast<Index>(b ^ x), static_cast<Index>(b)) += sign * phase;
    }
  }
  return op;
}

// ---------------------------------------------------------------------------
// l-bits and locality
// ---------------------------------------------------------------------------

/// tau^z_i = U S^z_i U^T, where the columns of U are eigenstates labeled by sigma.
inline Matrix liom(const Matrix& u, int site, const ChainGeometry& g) {
  if (static_cast<BasisIndex>(u.rows()) != g.dimension() || u.rows() != u.cols()) {
    throw std::invalid_argument("frame dimension does not match the chain");
  }
  if (orthogonality_defect(u) > 1e-8) throw std::invalid_argument("l-bit frame is not orthogonal");
  const Vector sz = sz_diagonal(g, site);
  return u * sz.asDiagonal() * u.transpose();
}

inline double commutator_max(const Matrix& a, const Matrix& b) { return max_abs(a * b - b * a); }

/// w(r): squared Pauli weight on strings reaching outside [center - r, center + r].
struct WeightProfile {
  int center = 0;
  std::vector<double> weights;  // r = 0..n
};

inline WeightProfile locality_profile(const PauliDecomposition& d, int center, const ChainGeometry& g) {
  g.require_site(center);
  const int n = g.size();
  WeightProfile w;
  w.center = center;
  w.weights.assign(static_cast<std::size_t>(n) + 1, 0.0);
  const int c = g.position(center);
  for (std::size_t code = 0; code < d.coefficients.size(); ++code) {
    const double weight = std::norm(d.coefficients[code]);
    if (weight == 0.0) continue;
    const unsigned support = d.support(code);
    if (support == 0) continue;
    // Radius needed to contain the support.
    int reach = 0;
    for (int p = 0; p < n; ++p) {
      if (support & (1U << p)) reach = std::max(reach, std::abs(p - c));
    }
    for (int r = 0; r < reach; ++r) w.weights[r] += weight;
  }
  return w;
}

inline WeightProfile locality_profile(const Matrix& op, int center, const ChainGeometry& g) {
  return locality_profile(pauli_decompose(op, g), center, g);
}

/// Per-site decay ratio q of a least-squares fit w(r) ~ A q^r over the radii
/// where w(r) stays above the roundoff floor. Returns 0 for strictly local
/// operators.
inline double decay_ratio(const WeightProfile& w, double floor = 1e-24) {
  std::vector<double> rs, logs;
  for (std::size_t r = 0; r < w.weights.size(); ++r) {
    if (w.weights[r] > floor) {
      rs.push_back(static_cast<double>(r));
      logs.push_back(std::log(w.weights[r]));
    }
  }
  if (rs.empty()) return 0.0;
  if (rs.size() == 1) {
    // Single point above the floor: decay to the floor within one site.
    return std::min(1.0, floor / w.weights[static_cast<std::size_t>(rs.front())]);
  }
  const double mr = std::accumulate(rs.begin(), rs.end(), 0.0) / rs.size();
  const double ml = std::accumulate(logs.begin(), logs.end(), 0.0) / logs.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    sxy += (rs[i] - mr) * (logs[i] - ml);
    sxx += (rs[i] - mr) * (rs[i] - mr);
  }
  return std::exp(sxy / sxx);
}

// ---------------------------------------------------------------------------
// Eigenstate expectations
// ---------------------------------------------------------------------------

/// (U^T op U)_{aa} for every column a.
inline Vector eigenstate_expectation_all(const Matrix& u, const Matrix& op) {
  if (op.rows() != u.rows() || op.cols() != u.rows()) throw std::invalid_argument("operator dimension mismatch");
  return (u.transpose() * (op * u)).diagonal();
}

/// Same for a diagonal operator given by its diagonal.
inline Vector diagonal_expectations(const Matrix& u, const Vector& diag) {
  if (diag.size() != u.rows()) throw std::invalid_argument("operator dimension mismatch");
  return u.cwiseAbs2().transpose() * diag;
}

inline double truncated_correlation(const Matrix& u, const Matrix& op_i, const Matrix& op_j, Index alpha) {
  if (alpha < 0 || alpha >= u.cols()) throw std::out_of_range("eigenstate index out of range");
  const auto v = u.col(alpha);
  const Vector ov = op_j * v;
  const double joint = v.dot(op_i * ov);
  return joint - v.dot(op_i * v) * v.dot(ov);
}

/// Connected <S^z_i S^z_j>_a for every column a.
inline Vector sz_correlations(const Matrix& u, const ChainGeometry& g, int i, int j) {
  const Vector zi = sz_diagonal(g, i);
  const Vector zj = sz_diagonal(g, j);
  const Matrix p = u.cwiseAbs2();
  const Vector joint = p.transpose() * zi.cwiseProduct(zj);
  const Vector mi = p.transpose() * zi;
  const Vector mj = p.transpose() * zj;
  return joint - mi.cwiseProduct(mj);
}

/// Products of S^x or S^z over sites within radius of the center, each site
/// either absent, X or Z; the all-identity product is excluded.
inline std::vector<Matrix> local_operators(int center, int radius, const ChainGeometry& g) {
  g.require_site(center);
  std::vector<int> sites;
  for (int s = center - radius; s <= center + radius; ++s) {
    if (g.contains(s)) sites.push_back(s);
  }
  std::vector<Matrix> ops;
  std::size_t combos = 1;
  for (std::size_t k = 0; k < sites.size(); ++k) combos *= 3;
  for (std::size_t code = 1; code < combos; ++code) {
    std::vector<SiteOperator> factors;
    std::size_t c = code;
    for (int s : sites) {
      const auto letter = c % 3;
      c /= 3;
      if (letter == 1) factors.push_back({s, pauli::x()});
      if (letter == 2) factors.push_back({s, pauli::z()});
    }
    ops.push_back(kron_operator(factors, g));
  }
  return ops;
}

// ---------------------------------------------------------------------------
// State averages
// ---------------------------------------------------------------------------

struct UniformWeights {};
struct GibbsWeights {
  double beta = 0.0;
  Vector energies;
};
using StateWeights = std::variant<UniformWeights, GibbsWeights>;

inline Vector normalized_weights(const StateWeights& weights, Index count) {
  if (count <= 0) throw std::invalid_argument("state average needs at least one state");
  if (std::holds_alternative<UniformWeights>(weights)) return Vector::Constant(count, 1.0 / count);
  const auto& gibbs = std::get<GibbsWeights>(weights);
  if (gibbs.energies.size() != count) throw std::invalid_argument("Gibbs energies do not match the values");
  if (!std::isfinite(gibbs.beta)) throw std::invalid_argument("beta must be finite");
  // Shift by the extreme energy so the largest exponent is zero.
  const double shift = gibbs.beta >= 0.0 ? gibbs.energies.minCoeff() : gibbs.energies.maxCoeff();
  Vector w = (-gibbs.beta * (gibbs.energies.array() - shift)).exp().matrix();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw std::domain_error("Gibbs weights are not normalizable");
  return w / total;
}

inline double state_average(const Vector& values, const StateWeights& weights) {
  return normalized_weights(weights, values.size()).dot(values);
}

}  // namespace mblkam
