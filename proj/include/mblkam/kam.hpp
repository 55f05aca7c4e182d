#pragma once

// Multi-scale quasi-local diagonalization. Each step removes the off-diagonal
// band of the current scale with the generator A_{st} = H_{st} / (E_s - E_t),
// conjugating H -> e^A H e^-A, and diagonalizes resonant regions exactly as
// blocks whose internal eigenstates are relabeled as metaspins.

#include <mblkam/oracle.hpp>

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mblkam {

using SparseMatrix = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// Length-scale schedule
// ---------------------------------------------------------------------------

struct ScaleBand {
  int k = 0;
  double lower = 1.0;  // L_k
  double upper = 1.0;  // L_{k+1}
  std::vector<int> distances;

  bool contains(int m) const { return std::find(distances.begin(), distances.end(), m) != distances.end(); }
  bool empty() const { return distances.empty(); }
  int first() const { return distances.front(); }
  int last() const { return distances.back(); }
};

struct ScaleSchedule {
  double growth = 15.0 / 8.0;
  std::vector<ScaleBand> bands;

  /// Index of the band holding Hamming distance m, or -1 if beyond the schedule.
  int band_of(int m) const {
    for (const auto& b : bands) {
      if (b.contains(m)) return b.k;
    }
    return -1;
  }
};

namespace detail {
// Smallest integer >= x, tolerant of roundoff in growth^k.
inline long integer_ceiling(double x) { return static_cast<long>(std::ceil(x - 1e-9 * std::max(1.0, x))); }
}  // namespace detail

inline ScaleSchedule scale_bands(double growth, int k_max) {
  if (!(growth > 1.0) || !std::isfinite(growth)) throw std::invalid_argument("scale growth must exceed 1");
  if (k_max < 0) throw std::invalid_argument("k_max must be non-negative");
  ScaleSchedule s;
  s.growth = growth;
  for (int k = 0; k <= k_max; ++k) {
    ScaleBand b;
    b.k = k;
    b.lower = std::pow(growth, k);
    b.upper = std::pow(growth, k + 1);
    const long lo = std::max(1L, detail::integer_ceiling(b.lower));
    const long hi = detail::integer_ceiling(b.upper) - 1;
    if (hi - lo > 1'000'000) throw std::length_error("scale band too wide to enumerate");
    for (long m = lo; m <= hi; ++m) b.distances.push_back(static_cast<int>(m));
    s.bands.push_back(std::move(b));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Off-diagonal selection and generators
// ---------------------------------------------------------------------------

struct BasisPair {
  BasisIndex row = 0;
  BasisIndex col = 0;  // row < col

  friend bool operator==(const BasisPair&, const BasisPair&) = default;
};

namespace detail {
inline std::uint64_t distance_mask(const ScaleBand& band) {
  std::uint64_t mask = 0;
  for (int m : band.distances) {
    if (m >= 1 && m < 64) mask |= std::uint64_t{1} << m;
  }
  return mask;
}
}  // namespace detail

/// Unordered pairs (row < col) whose Hamming distance lies in the band and whose
/// magnitude exceeds floor, in row-major order.
inline std::vector<BasisPair> offdiagonal_band(const Matrix& h, const ScaleBand& band, double floor) {
  if (floor < 0.0) throw std::invalid_argument("amplitude floor must be non-negative");
  const std::uint64_t mask = detail::distance_mask(band);
  std::vector<BasisPair> pairs;
  const auto dim = static_cast<BasisIndex>(h.rows());
  for (BasisIndex s = 0; s < dim; ++s) {
    for (BasisIndex t = s + 1; t < dim; ++t) {
      if (!((mask >> hamming(s, t)) & 1U)) continue;
      // Column-major storage: (t, s) is contiguous in the inner loop.
      if (std::abs(h(static_cast<Index>(t), static_cast<Index>(s))) > floor) pairs.push_back({s, t});
    }
  }
  return pairs;
}

inline double max_magnitude(const Matrix& h, std::span<const BasisPair> pairs) {
  double best = 0.0;
  for (const auto& p : pairs) best = std::max(best, std::abs(h(static_cast<Index>(p.row), static_cast<Index>(p.col))));
  return best;
}

/// Max |H_st| over all pairs with Hamming distance in the band.
inline double band_max(const Matrix& h, const ScaleBand& band) {
  return max_magnitude(h, offdiagonal_band(h, band, 0.0));
}

struct GeneratorMatrix {
  SparseMatrix a;                          // antisymmetric
  std::vector<BasisPair> resonant_pairs;   // excluded from a

  Index size() const { return a.rows(); }
  Matrix dense() const { return Matrix(a); }
  bool is_zero() const { return a.nonZeros() == 0; }
};

inline GeneratorMatrix build_generator(const Matrix& h, std::span<const BasisPair> pairs, double rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("cutoff ratio must be finite and >= 0");
  GeneratorMatrix g;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    const auto s = static_cast<Index>(p.row);
    const auto t = static_cast<Index>(p.col);
    const double coupling = h(s, t);
    const double denominator = h(s, s) - h(t, t);
    if (!std::isfinite(coupling) || !std::isfinite(denominator)) {
      throw std::domain_error("non-finite coupling or energy denominator at pair (" + std::to_string(p.row) +
                              ", " + std::to_string(p.col) + ")");
    }
    if (denominator == 0.0) {
      g.resonant_pairs.push_back(p);
      continue;
    }
    const double ratio = coupling / denominator;
    if (!std::isfinite(ratio)) {
      throw std::domain_error("energy denominator overflow at pair (" + std::to_string(p.row) + ", " +
                              std::to_string(p.col) + ")");
    }
    if (std::abs(ratio) <= std::pow(rho, hamming(p.row, p.col))) {
      triplets.emplace_back(s, t, ratio);
      triplets.emplace_back(t, s, -ratio);
    } else {
      g.resonant_pairs.push_back(p);
    }
  }
  g.a.resize(h.rows(), h.cols());
  g.a.setFromTriplets(triplets.begin(), triplets.end());
  return g;
}

inline GeneratorMatrix build_generator(const Matrix& h, const ScaleBand& band, double rho, double floor = 0.0) {
  const auto pairs = offdiagonal_band(h, band, floor);
  return build_generator(h, pairs, rho);
}

// ---------------------------------------------------------------------------
// Exponential conjugation
// ---------------------------------------------------------------------------

struct SeriesOptions {
  double tol = 1e-15;     // relative remainder bound, max norm
  int max_terms = 200;
};

struct SeriesReport {
  int terms = 0;    // series terms per application
  int splits = 0;   // the generator was applied 2^splits times at 1/2^splits strength
};

namespace detail {

inline double generator_norm(const SparseMatrix& a) {
  Vector rows = Vector::Zero(a.rows());
  for (Index c = 0; c < a.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) rows(it.row()) += std::abs(it.value());
  }
  return rows.size() == 0 ? 0.0 : rows.maxCoeff();
}

// Smallest J with x^{J+1}/(J+1)! / (1 - x/(J+2)) <= tol.
inline int series_length(double x, double tol, int max_terms) {
  if (x == 0.0) return 0;
  double term = 1.0;  // x^j / j!
  for (int j = 0; j <= max_terms; ++j) {
    const double next = term * x / (j + 1);
    const double shrink = x / (j + 2);
    if (shrink < 1.0 && next / (1.0 - shrink) <= tol) return j;
    term = next;
  }
  throw std::runtime_error("exponential series cannot reach tolerance " + std::to_string(tol) + " within " +
                           std::to_string(max_terms) + " terms");
}

inline int split_count(double x) {
  int s = 0;
  while (x > 4.0 && s < 60) {
    x *= 0.5;
    ++s;
  }
  return s;
}

// Dense products win once the generator is no longer sparse.
inline bool prefer_dense(const SparseMatrix& a) {
  const double dim = static_cast<double>(a.rows());
  return static_cast<double>(a.nonZeros()) > dim * dim / 16.0;
}

// q = t * a, column by column; a is column-major sparse.
inline void multiply_into(const Matrix& t, const SparseMatrix& a, Matrix& q) {
  q.setZero(t.rows(), a.cols());
  for (Index j = 0; j < a.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(a, j); it; ++it) q.col(j).noalias() += it.value() * t.col(it.row());
  }
}

inline void multiply_into(const Matrix& t, const Matrix& a, Matrix& q) { q.noalias() = t * a; }

template <class Op>
Matrix conjugate_series(const Matrix& h, const Op& a, int terms) {
  Matrix result = h;
  Matrix term = h;
  Matrix q;
  for (int j = 1; j <= terms; ++j) {
    // For symmetric T and antisymmetric A: AT - TA = -(TA) - (TA)^T.
    multiply_into(term, a, q);
    term = (q + q.transpose()) * (-1.0 / static_cast<double>(j));
    result += term;
  }
  return result;
}

template <class Op>
void frame_series(Matrix& u, const Op& minus_a, int terms) {
  Matrix term = u;
  Matrix q;
  for (int j = 1; j <= terms; ++j) {
    multiply_into(term, minus_a, q);
    term = q / static_cast<double>(j);
    u += term;
  }
}

}  // namespace detail

/// e^A H e^-A with a certified truncation remainder below opt.tol * ||H||_inf.
inline Matrix rotate(const Matrix& h, const GeneratorMatrix& g, SeriesOptions opt = {},
                     SeriesReport* report = nullptr) {
  if (g.size() != h.rows()) throw std::invalid_argument("generator dimension does not match H");
  if (g.is_zero()) {
    if (report) *report = {};
    return h;
  }
  const double x = 2.0 * detail::generator_norm(g.a);
  const int splits = detail::split_count(x);
  const double scale = std::ldexp(1.0, -splits);
  const int terms = detail::series_length(x * scale, opt.tol, opt.max_terms);
  if (report) *report = {terms, splits};
  const SparseMatrix a = g.a * scale;
  Matrix out = h;
  const long repeats = 1L << splits;
  if (detail::prefer_dense(a)) {
    const Matrix dense_a(a);
    for (long r = 0; r < repeats; ++r) out = detail::conjugate_series(out, dense_a, terms);
  } else {
    for (long r = 0; r < repeats; ++r) out = detail::conjugate_series(out, a, terms);
  }
  return out;
}

/// u <- u e^-A, so that columns of u stay the current eigenvector estimates.
inline void rotate_frame(Matrix& u, const GeneratorMatrix& g, SeriesOptions opt = {}) {
  if (g.is_zero()) return;
  const double x = detail::generator_norm(g.a);
  const int splits = detail::split_count(x);
  const double scale = std::ldexp(1.0, -splits);
  const int terms = detail::series_length(x * scale, opt.tol, opt.max_terms);
  const SparseMatrix minus_a = g.a * (-scale);
  const long repeats = 1L << splits;
  if (detail::prefer_dense(minus_a)) {
    const Matrix dense(minus_a);
    for (long r = 0; r < repeats; ++r) detail::frame_series(u, dense, terms);
  } else {
    for (long r = 0; r < repeats; ++r) detail::frame_series(u, minus_a, terms);
  }
}

/// e^A as a dense matrix.
inline Matrix exponential(const GeneratorMatrix& g, SeriesOptions opt = {}) {
  Matrix u = Matrix::Identity(g.size(), g.size());
  GeneratorMatrix negated{-g.a, {}};
  rotate_frame(u, negated, opt);
  return u;
}

// ---------------------------------------------------------------------------
// Resonant blocks
// ---------------------------------------------------------------------------

/// Sites spanned by one resonant pair and the scale at which it was found.
struct Resonance {
  int first_site = 0;
  int last_site = 0;
  double scale = 1.0;
};

/// Hull of the flip set of (row, col). Resonant terms act along nearest-neighbor
/// connected paths, so the whole interval belongs to the resonant region.
inline Resonance resonance_of(const BasisPair& p, const ChainGeometry& g, double scale) {
  const BasisIndex flips = p.row ^ p.col;
  if (flips == 0) throw std::invalid_argument("resonant pair must differ in at least one spin");
  const int n = g.size();
  // Highest set bit is the leftmost position.
  const int first_pos = n - 1 - (63 - std::countl_zero(flips));
  const int last_pos = n - 1 - std::countr_zero(flips);
  return {g.site_at(first_pos), g.site_at(last_pos), scale};
}

struct ResonantBlock {
  std::vector<int> core_sites;  // ascending
  int fattened_first = 0;
  int fattened_last = 0;
  double scale = 1.0;

  int diameter() const { return core_sites.back() - core_sites.front() + 1; }
  int volume() const { return static_cast<int>(core_sites.size()); }
  int fattened_size() const { return fattened_last - fattened_first + 1; }
  bool covers(const ChainGeometry& g) const {
    return fattened_first <= g.first_site() && fattened_last >= g.last_site();
  }
  bool in_core(int site) const { return std::binary_search(core_sites.begin(), core_sites.end(), site); }

  friend bool operator==(const ResonantBlock&, const ResonantBlock&) = default;
};

namespace detail {

inline int gap(const ResonantBlock& a, const ResonantBlock& b) {
  int best = std::numeric_limits<int>::max();
  for (int x : a.core_sites) {
    for (int y : b.core_sites) best = std::min(best, std::abs(x - y));
  }
  return best;
}

inline ResonantBlock unite(const ResonantBlock& a, const ResonantBlock& b) {
  ResonantBlock u;
  std::set_union(a.core_sites.begin(), a.core_sites.end(), b.core_sites.begin(), b.core_sites.end(),
                 std::back_inserter(u.core_sites));
  u.scale = std::max(a.scale, b.scale);
  return u;
}

inline void fatten(ResonantBlock& b, const ChainGeometry& g) {
  const int radius = static_cast<int>(std::floor(b.scale + 1e-9));
  b.fattened_first = std::max(g.first_site(), b.core_sites.front() - radius);
  b.fattened_last = std::min(g.last_site(), b.core_sites.back() + radius);
}

}  // namespace detail

/// Resonant regions: union of resonant supports, nearest-neighbor components,
/// volume-dependent merging up to distance exp(c sqrt(V_small)), then fattening
/// by each block's scale with touching fattened blocks united.
inline std::vector<ResonantBlock> form_blocks(std::span<const Resonance> history, const ChainGeometry& g,
                                              double merge_constant) {
  if (history.empty()) return {};
  const int n = g.size();
  std::vector<double> site_scale(n, -1.0);
  for (const auto& r : history) {
    g.require_site(r.first_site);
    g.require_site(r.last_site);
    for (int i = r.first_site; i <= r.last_site; ++i) {
      auto& s = site_scale[g.position(i)];
      s = std::max(s, r.scale);
    }
  }

  std::vector<ResonantBlock> blocks;
  for (int p = 0; p < n; ++p) {
    if (site_scale[p] < 0.0) continue;
    if (p == 0 || site_scale[p - 1] < 0.0) blocks.emplace_back();
    auto& b = blocks.back();
    b.core_sites.push_back(g.site_at(p));
    b.scale = std::max(b.scale, site_scale[p]);
  }

  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < blocks.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < blocks.size() && !changed; ++j) {
        const int smaller = std::min(blocks[i].volume(), blocks[j].volume());
        const double reach = std::exp(merge_constant * std::sqrt(static_cast<double>(smaller)));
        if (detail::gap(blocks[i], blocks[j]) <= reach) {
          blocks[i] = detail::unite(blocks[i], blocks[j]);
          blocks.erase(blocks.begin() + static_cast<std::ptrdiff_t>(j));
          changed = true;
        }
      }
    }
  }

  for (auto& b : blocks) detail::fatten(b, g);
  std::sort(blocks.begin(), blocks.end(),
            [](const ResonantBlock& a, const ResonantBlock& b) { return a.fattened_first < b.fattened_first; });
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i + 1 < blocks.size(); ++i) {
      if (blocks[i].fattened_last + 1 >= blocks[i + 1].fattened_first) {
        blocks[i] = detail::unite(blocks[i], blocks[i + 1]);
        detail::fatten(blocks[i], g);
        blocks.erase(blocks.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        changed = true;
        break;
      }
    }
  }
  return blocks;
}

/// Convenience form: single-site resonances all found at scale L.
inline std::vector<ResonantBlock> form_blocks(std::span<const int> resonant_sites, const ChainGeometry& g,
                                              double scale, double merge_constant) {
  std::vector<Resonance> history;
  for (int s : resonant_sites) history.push_back({s, s, scale});
  return form_blocks(history, g, merge_constant);
}

// ---------------------------------------------------------------------------
// Metaspin labeling and block rotations
// ---------------------------------------------------------------------------

/// Greedy maximum-overlap matching of eigenvectors (columns, ascending energy) to
/// basis labels (rows). Pairs are taken in order of decreasing |overlap|; ties go
/// to the lower-energy eigenvector. Returns the eigenvector index for each label.
inline std::vector<Index> greedy_metaspin_assignment(const Matrix& vectors) {
  const Index dim = vectors.rows();
  if (vectors.cols() != dim) throw std::invalid_argument("eigenvector matrix must be square");
  std::vector<Index> best_row(static_cast<std::size_t>(dim));
  std::vector<char> row_taken(static_cast<std::size_t>(dim), 0);
  bool distinct = true;
  for (Index c = 0; c < dim; ++c) {
    Index r_best = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&r_best);
    best_row[c] = r_best;
    if (row_taken[r_best]) distinct = false;
    row_taken[r_best] = 1;
  }
  std::vector<Index> label_to_vector(static_cast<std::size_t>(dim), -1);
  if (distinct) {
    for (Index c = 0; c < dim; ++c) label_to_vector[best_row[c]] = c;
    return label_to_vector;
  }

  // Lazy global greedy: each column walks its own rows in decreasing overlap.
  std::vector<std::vector<Index>> order(static_cast<std::size_t>(dim));
  std::vector<std::size_t> cursor(static_cast<std::size_t>(dim), 0);
  auto row_order = [&](Index c) -> const std::vector<Index>& {
    auto& o = order[c];
    if (o.empty()) {
      o.resize(static_cast<std::size_t>(dim));
      for (Index r = 0; r < dim; ++r) o[r] = r;
      std::stable_sort(o.begin(), o.end(), [&](Index x, Index y) {
        return std::abs(vectors(x, c)) > std::abs(vectors(y, c));
      });
    }
    return o;
  };
  struct Candidate {
    double overlap;
    Index column;
    Index row;
  };
  auto worse = [](const Candidate& a, const Candidate& b) {
    if (a.overlap != b.overlap) return a.overlap < b.overlap;
    if (a.column != b.column) return a.column > b.column;
    return a.row > b.row;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> queue(worse);
  for (Index c = 0; c < dim; ++c) queue.push({std::abs(vectors(best_row[c], c)), c, best_row[c]});
  std::fill(row_taken.begin(), row_taken.end(), 0);
  while (!queue.empty()) {
    const Candidate top = queue.top();
    queue.pop();
    if (!row_taken[top.row]) {
      row_taken[top.row] = 1;
      label_to_vector[top.row] = top.column;
      continue;
    }
    const auto& o = row_order(top.column);
    auto& k = cursor[top.column];
    while (k < o.size() && row_taken[o[k]]) ++k;
    if (k == o.size()) throw std::logic_error("metaspin matching ran out of labels");
    queue.push({std::abs(vectors(o[k], top.column)), top.column, o[k]});
  }
  return label_to_vector;
}

/// Reorders eigenpairs so column l is the eigenvector labeled l, with a
/// non-negative overlap on its own label.
inline void relabel_by_overlap(Matrix& vectors, Vector& energies) {
  const auto assignment = greedy_metaspin_assignment(vectors);
  Matrix ordered(vectors.rows(), vectors.cols());
  Vector e(energies.size());
  for (Index l = 0; l < vectors.rows(); ++l) {
    const Index c = assignment[l];
    const double sign = vectors(l, c) < 0.0 ? -1.0 : 1.0;
    ordered.col(l) = sign * vectors.col(c);
    e(l) = energies(c);
  }
  vectors = std::move(ordered);
  energies = std::move(e);
}

struct BlockRotation {
  int first_site = 0;  // fattened block
  int last_site = 0;
  BasisIndex inner_mask = 0;
  std::vector<BasisIndex> exteriors;   // one sector per exterior configuration
  std::vector<Matrix> unitaries;       // column l is the state with metaspin label l
  /// Per sector: the block basis label carrying the largest weight in metaspin state l.
  std::vector<std::vector<BasisIndex>> metaspin_map;

  Index sector_size() const { return Index{1} << std::popcount(inner_mask); }

  BasisIndex global_index(BasisIndex exterior, BasisIndex local) const {
    BasisIndex out = exterior;
    BasisIndex mask = inner_mask;
    for (BasisIndex bit = 1; mask != 0; bit <<= 1) {
      const BasisIndex lowest = mask & (~mask + 1);
      if (local & bit) out |= lowest;
      mask &= mask - 1;
    }
    return out;
  }

  bool metaspin_identity() const {
    for (const auto& sector : metaspin_map) {
      for (std::size_t l = 0; l < sector.size(); ++l) {
        if (sector[l] != l) return false;
      }
    }
    return true;
  }

  std::vector<Index> sector_indices(std::size_t sector) const {
    std::vector<Index> idx(static_cast<std::size_t>(sector_size()));
    for (std::size_t l = 0; l < idx.size(); ++l) idx[l] = static_cast<Index>(global_index(exteriors[sector], l));
    return idx;
  }

  Matrix dense(Index dim) const {
    Matrix o = Matrix::Zero(dim, dim);
    for (std::size_t s = 0; s < exteriors.size(); ++s) {
      const auto idx = sector_indices(s);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < idx.size(); ++c) o(idx[r], idx[c]) = unitaries[s](r, c);
      }
    }
    return o;
  }

  /// h <- O^T h O, applied sector by sector.
  void conjugate(Matrix& h) const {
    const Index dim = h.rows();
    const Index b = sector_size();
    Matrix rows(b, dim);
    for (std::size_t s = 0; s < exteriors.size(); ++s) {
      const auto idx = sector_indices(s);
      for (Index l = 0; l < b; ++l) rows.row(l) = h.row(idx[l]);
      const Matrix mixed = unitaries[s].transpose() * rows;
      for (Index l = 0; l < b; ++l) h.row(idx[l]) = mixed.row(l);
    }
    apply_frame(h);
  }

  /// u <- u O.
  void apply_frame(Matrix& u) const {
    const Index dim = u.rows();
    const Index b = sector_size();
    Matrix cols(dim, b);
    for (std::size_t s = 0; s < exteriors.size(); ++s) {
      const auto idx = sector_indices(s);
      for (Index l = 0; l < b; ++l) cols.col(l) = u.col(idx[l]);
      const Matrix mixed = cols * unitaries[s];
      for (Index l = 0; l < b; ++l) u.col(idx[l]) = mixed.col(l);
    }
  }
};

namespace detail {
inline BasisIndex interval_mask(const ChainGeometry& g, int first, int last) {
  BasisIndex mask = 0;
  for (int i = first; i <= last; ++i) mask |= g.bit(i);
  return mask;
}
}  // namespace detail

/// Largest |h_st|, s != t, over entries internal to the fattened interval.
inline double block_internal_max(const Matrix& h, const ChainGeometry& g, int first, int last) {
  const BasisIndex inner = detail::interval_mask(g, first, last);
  double best = 0.0;
  const auto dim = static_cast<BasisIndex>(h.rows());
  for (BasisIndex s = 0; s < dim; ++s) {
    const BasisIndex outer = s & ~inner;
    for (BasisIndex sub = inner; ; sub = (sub - 1) & inner) {
      const BasisIndex t = outer | sub;
      if (t < s) best = std::max(best, std::abs(h(static_cast<Index>(t), static_cast<Index>(s))));
      if (sub == 0) break;
    }
  }
  return best;
}

/// Exact diagonalization of h restricted to each exterior sector of the
/// fattened interval [first, last].
inline BlockRotation block_rotation(const Matrix& h, const ChainGeometry& g, int first, int last) {
  g.require_site(first);
  g.require_site(last);
  if (first > last) throw std::invalid_argument("empty fattened block");
  BlockRotation rot;
  rot.first_site = first;
  rot.last_site = last;
  rot.inner_mask = detail::interval_mask(g, first, last);
  const int width = last - first + 1;
  const auto b = static_cast<Index>(BasisIndex{1} << width);
  for (BasisIndex e = 0; e < g.dimension(); ++e) {
    if (e & rot.inner_mask) continue;
    rot.exteriors.push_back(e);
  }
  rot.unitaries.reserve(rot.exteriors.size());
  for (std::size_t s = 0; s < rot.exteriors.size(); ++s) {
    const auto idx = rot.sector_indices(s);
    Matrix sub(b, b);
    for (Index r = 0; r < b; ++r) {
      for (Index c = 0; c < b; ++c) sub(r, c) = h(idx[r], idx[c]);
    }
    sub = 0.5 * (sub + sub.transpose()).eval();
    Spectrum spec;
    try {
      spec = diagonalize(sub);
    } catch (const std::exception& ex) {
      throw std::runtime_error("block sector diagonalization failed: " + std::string(ex.what()));
    }
    relabel_by_overlap(spec.eigenvectors, spec.eigenvalues);
    std::vector<BasisIndex> dominant(static_cast<std::size_t>(b));
    for (Index l = 0; l < b; ++l) {
      Index r = 0;
      spec.eigenvectors.col(l).cwiseAbs().maxCoeff(&r);
      dominant[l] = static_cast<BasisIndex>(r);
    }
    rot.metaspin_map.push_back(std::move(dominant));
    rot.unitaries.push_back(std::move(spec.eigenvectors));
  }
  return rot;
}

inline BlockRotation block_rotation(const Matrix& h, const ResonantBlock& block, const ChainGeometry& g) {
  return block_rotation(h, g, block.fattened_first, block.fattened_last);
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct KamConfig {
  double gamma = 0.01;
  double growth = 15.0 / 8.0;
  double epsilon_exponent = 1.0 / 20.0;
  std::optional<double> rho;  // overrides gamma / epsilon
  double tol_offdiag = 1e-12;
  int k_max = 40;
  double merge_constant = 1.0;
  SeriesOptions series{};

  double epsilon() const { return resonance_threshold(gamma, epsilon_exponent); }
  double cutoff_ratio() const {
    if (rho) return *rho;
    return gamma == 0.0 ? 0.0 : gamma / epsilon();
  }

  void validate() const {
    if (!(growth > 1.0)) throw std::invalid_argument("growth must exceed 1");
    if (!(tol_offdiag > 0.0)) throw std::invalid_argument("tol_offdiag must be positive");
    if (k_max < 0) throw std::invalid_argument("k_max must be non-negative");
    if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be non-negative");
    if (!(epsilon_exponent > 0.0)) throw std::invalid_argument("epsilon exponent must be positive");
    if (rho && !(*rho >= 0.0)) throw std::invalid_argument("rho must be non-negative");
    if (!(merge_constant >= 0.0)) throw std::invalid_argument("merge constant must be non-negative");
  }
};

struct StepRecord {
  int step = 0;
  int band = 0;  // k of the scale band
  int band_first = 0;
  int band_last = 0;
  double scale = 1.0;  // L_k
  std::size_t selected_pairs = 0;
  std::size_t resonant_pairs = 0;
  double band_max_before = 0.0;
  double band_max_after = 0.0;
  double offdiag_max_after = 0.0;
  int series_terms = 0;
  int rotated_blocks = 0;
  bool active = false;
  bool exact_fallback = false;
  std::vector<ResonantBlock> blocks;
};

struct KamResult {
  Matrix u;                  // columns: eigenvector estimate for each label
  Vector final_diagonal;     // E_sigma after the last rotation
  std::vector<StepRecord> steps;
  std::vector<ResonantBlock> blocks;
  std::vector<Resonance> resonances;
  bool fully_resonant = false;
  bool converged = false;
  double final_offdiagonal = 0.0;
  std::string message;
};

namespace detail {

inline void record_resonances(std::vector<Resonance>& history, std::span<const BasisPair> pairs,
                              const ChainGeometry& g, double scale) {
  for (const auto& p : pairs) {
    const Resonance r = resonance_of(p, g, scale);
    auto it = std::find_if(history.begin(), history.end(), [&](const Resonance& h) {
      return h.first_site == r.first_site && h.last_site == r.last_site;
    });
    if (it == history.end()) {
      history.push_back(r);
    } else {
      it->scale = std::max(it->scale, r.scale);
    }
  }
}

// Bands the chain can use: distances 1..n.
inline std::vector<int> active_bands(const ScaleSchedule& s, int n) {
  std::vector<int> out;
  for (const auto& b : s.bands) {
    if (!b.empty() && b.first() <= n) out.push_back(b.k);
  }
  return out;
}

}  // namespace detail

/// Sweeps the scale bands k = 0, 1, ... (cycling back to k = 0 after the band
/// holding distance n) until every off-diagonal entry is below tol_offdiag or
/// k_max steps have run.
inline KamResult diagonalize_kam(const Matrix& h0, const ChainGeometry& g, const KamConfig& cfg) {
  cfg.validate();
  detail::require_symmetric(h0);
  if (static_cast<BasisIndex>(h0.rows()) != g.dimension()) {
    throw std::invalid_argument("Hamiltonian dimension does not match the chain");
  }
  const int n = g.size();
  const double rho = cfg.cutoff_ratio();
  const double floor = cfg.tol_offdiag / static_cast<double>(g.dimension());
  int top = 0;
  while (std::pow(cfg.growth, top + 1) <= n) ++top;
  const ScaleSchedule schedule = scale_bands(cfg.growth, top);
  const std::vector<int> sweep = detail::active_bands(schedule, n);

  KamResult result;
  Matrix h = h0;
  result.u = Matrix::Identity(h.rows(), h.cols());
  double off = max_offdiagonal(h);

  for (int step = 0; step < cfg.k_max && off > cfg.tol_offdiag; ++step) {
    const auto& band = schedule.bands[sweep[static_cast<std::size_t>(step) % sweep.size()]];
    const bool last_band = band.k == sweep.back();
    StepRecord rec;
    rec.step = step;
    rec.band = band.k;
    rec.band_first = band.first();
    rec.band_last = band.last();
    rec.scale = band.lower;

    const auto pairs = offdiagonal_band(h, band, floor);
    rec.selected_pairs = pairs.size();
    rec.band_max_before = max_magnitude(h, pairs);
    if (!pairs.empty()) {
      const GeneratorMatrix gen = build_generator(h, pairs, rho);
      rec.resonant_pairs = gen.resonant_pairs.size();
      if (!gen.is_zero()) {
        SeriesReport report;
        h = rotate(h, gen, cfg.series, &report);
        rotate_frame(result.u, gen, cfg.series);
        rec.series_terms = report.terms;
        rec.active = true;
      }
      detail::record_resonances(result.resonances, gen.resonant_pairs, g, band.lower);
    }

    result.blocks = form_blocks(result.resonances, g, cfg.merge_constant);
    const bool swallowed = std::any_of(result.blocks.begin(), result.blocks.end(),
                                       [&](const ResonantBlock& b) { return b.covers(g); });
    if (swallowed) {
      Spectrum spec = diagonalize(0.5 * (h + h.transpose()));
      relabel_by_overlap(spec.eigenvectors, spec.eigenvalues);
      result.u = (result.u * spec.eigenvectors).eval();
      h = spec.eigenvalues.asDiagonal();
      result.fully_resonant = true;
      rec.exact_fallback = true;
      rec.active = true;
    } else {
      for (const auto& block : result.blocks) {
        const bool ready = block.diameter() <= band.lower + 1e-9 || last_band;
        if (!ready) continue;
        if (block_internal_max(h, g, block.fattened_first, block.fattened_last) <= floor) continue;
        const BlockRotation rot = block_rotation(h, block, g);
        rot.conjugate(h);
        rot.apply_frame(result.u);
        h = 0.5 * (h + h.transpose()).eval();
        ++rec.rotated_blocks;
        rec.active = true;
      }
    }

    rec.band_max_after = band_max(h, band);
    off = max_offdiagonal(h);
    rec.offdiag_max_after = off;
    rec.blocks = result.blocks;
    result.steps.push_back(std::move(rec));
    if (result.fully_resonant) break;
  }

  result.final_diagonal = h.diagonal();
  result.final_offdiagonal = off;
  result.converged = off <= cfg.tol_offdiag;
  if (!result.converged) {
    result.message = "off-diagonal magnitude " + std::to_string(off) + " above tolerance after " +
                     std::to_string(result.steps.size()) + " steps";
  } else if (result.fully_resonant) {
    result.message = "single resonant block covers the chain; finished by exact diagonalization";
  }
  return result;
}

}  // namespace mblkam
