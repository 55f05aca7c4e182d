#pragma once

// Disordered random-field, random-transverse-field, random-exchange Ising chain
// on the interval [-K, K'] with exterior spins frozen to +1.

#include <mblkam/common.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace mblkam {

// ---------------------------------------------------------------------------
// Geometry and spin labels
// ---------------------------------------------------------------------------

struct ChainGeometry {
  int left_end = 0;   // K
  int right_end = 0;  // K'

  ChainGeometry() = default;
  ChainGeometry(int k, int k_prime) : left_end(k), right_end(k_prime) {
    if (k < 0 || k_prime < 0) throw std::invalid_argument("chain ends must be non-negative");
  }

  /// Chain of n sites with the origin at position (n-1)/2.
  static ChainGeometry centered(int n) {
    if (n < 1) throw std::invalid_argument("chain needs at least one site");
    return {(n - 1) / 2, n - 1 - (n - 1) / 2};
  }

  int size() const { return left_end + right_end + 1; }
  int first_site() const { return -left_end; }
  int last_site() const { return right_end; }
  bool contains(int site) const { return site >= -left_end && site <= right_end; }
  int position(int site) const { return site + left_end; }
  int site_at(int position) const { return position - left_end; }
  BasisIndex dimension() const { return BasisIndex{1} << size(); }

  /// Site -K is the most significant bit.
  BasisIndex bit(int site) const { return BasisIndex{1} << (size() - 1 - position(site)); }

  void require_site(int site) const {
    if (!contains(site)) {
      throw std::out_of_range("site " + std::to_string(site) + " outside [" +
                              std::to_string(first_site()) + ", " + std::to_string(last_site()) +
                              "]");
    }
  }

  /// Throws when 2^n exceeds the dense cap.
  void require_dense_capacity() const {
    if (size() > max_sites()) {
      throw std::length_error("chain of " + std::to_string(size()) +
                              " sites exceeds the dense cap of " + std::to_string(max_sites()) +
                              " (set MBLKAM_MAX_N to raise it)");
    }
  }

  friend bool operator==(const ChainGeometry&, const ChainGeometry&) = default;
};

/// Classical configuration sigma in {-1,+1}^n stored as its basis index.
struct SpinConfiguration {
  BasisIndex bits = 0;

  int spin(const ChainGeometry& g, int site) const {
    if (!g.contains(site)) return +1;  // frozen exterior
    return (bits & g.bit(site)) ? -1 : +1;
  }

  SpinConfiguration flipped(const ChainGeometry& g, int site) const {
    g.require_site(site);
    return {bits ^ g.bit(site)};
  }

  static SpinConfiguration from_spins(const ChainGeometry& g, const std::vector<int>& spins) {
    if (static_cast<int>(spins.size()) != g.size()) {
      throw std::invalid_argument("spin array length does not match the chain");
    }
    SpinConfiguration s;
    for (int p = 0; p < g.size(); ++p) {
      if (spins[p] != 1 && spins[p] != -1) throw std::invalid_argument("spins must be +1 or -1");
      if (spins[p] == -1) s.bits |= g.bit(g.site_at(p));
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Disorder distributions
// ---------------------------------------------------------------------------

class Distribution {
 public:
  enum class Kind { uniform, constant };

  static Distribution uniform(double lo, double hi) { return Distribution(Kind::uniform, lo, hi); }
  static Distribution constant(double value) { return Distribution(Kind::constant, value, value); }

  Kind kind() const { return kind_; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }

  /// Rejects unbounded supports and zero-width uniform densities.
  void validate(const std::string& what) const {
    if (!std::isfinite(lo_) || !std::isfinite(hi_)) {
      throw std::invalid_argument(what + ": distribution bounds must be finite");
    }
    if (kind_ == Kind::uniform && !(hi_ > lo_)) {
      throw std::invalid_argument(what + ": uniform distribution needs lo < hi");
    }
  }

  double sample(Rng& rng) const {
    if (kind_ == Kind::constant) return lo_;
    return lo_ + (hi_ - lo_) * uniform01(rng);
  }

  bool contains(double x) const { return x >= lo_ && x <= hi_; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  Distribution(Kind kind, double lo, double hi) : kind_(kind), lo_(lo), hi_(hi) {}

  Kind kind_ = Kind::uniform;
  double lo_ = -1.0;
  double hi_ = 1.0;
};

struct DistributionSpec {
  Distribution field = Distribution::uniform(-1.0, 1.0);
  Distribution transverse = Distribution::uniform(-1.0, 1.0);
  Distribution exchange = Distribution::uniform(-1.0, 1.0);
  double gamma = 0.01;

  void validate() const {
    field.validate("field h");
    transverse.validate("transverse amplitude Gamma");
    exchange.validate("exchange J");
    if (!std::isfinite(gamma) || gamma < 0.0) {
      throw std::invalid_argument("gamma must be finite and non-negative");
    }
  }
};

/// One sample of (h_i, Gamma_i, J_i) plus the global gamma.
struct DisorderRealization {
  ChainGeometry geometry;
  std::vector<double> fields;       // h_i, site -K..K'
  std::vector<double> transverse;   // Gamma_i, site -K..K'
  std::vector<double> exchanges;    // J_i, bond i = -K-1..K' couples (i, i+1)
  double gamma = 0.0;

  double field(int site) const { return fields.at(geometry.position(site)); }
  double transverse_coupling(int site) const { return gamma * transverse.at(geometry.position(site)); }

  /// J_i for i in [-K-1, K']; the bond between sites i and i+1.
  double exchange(int bond) const {
    if (bond < geometry.first_site() - 1 || bond > geometry.last_site()) return 0.0;
    return exchanges[static_cast<std::size_t>(bond - geometry.first_site() + 1)];
  }

  void validate_shape() const {
    const auto n = static_cast<std::size_t>(geometry.size());
    if (fields.size() != n || transverse.size() != n || exchanges.size() != n + 1) {
      throw std::invalid_argument("disorder arrays do not match the chain geometry");
    }
  }
};

inline DisorderRealization sample_disorder(const DistributionSpec& dist, const ChainGeometry& geometry,
                                           std::uint64_t seed) {
  dist.validate();
  Rng rng(seed);
  const int n = geometry.size();
  DisorderRealization r;
  r.geometry = geometry;
  r.gamma = dist.gamma;
  r.fields.resize(n);
  r.transverse.resize(n);
  r.exchanges.resize(n + 1);
  for (auto& h : r.fields) h = dist.field.sample(rng);
  for (auto& g : r.transverse) g = dist.transverse.sample(rng);
  for (auto& j : r.exchanges) j = dist.exchange.sample(rng);
  return r;
}

// ---------------------------------------------------------------------------
// Classical energies and single-flip differences
// ---------------------------------------------------------------------------

inline double classical_energy(const DisorderRealization& r, SpinConfiguration sigma) {
  const auto& g = r.geometry;
  if (sigma.bits >= g.dimension()) throw std::invalid_argument("configuration outside the chain basis");
  double e = 0.0;
  for (int i = g.first_site(); i <= g.last_site(); ++i) e += r.field(i) * sigma.spin(g, i);
  for (int i = g.first_site() - 1; i <= g.last_site(); ++i) {
    e += r.exchange(i) * sigma.spin(g, i) * sigma.spin(g, i + 1);
  }
  return e;
}

/// All 2^n classical energies, indexed by basis label.
inline Vector classical_energies(const DisorderRealization& r) {
  const auto& g = r.geometry;
  g.require_dense_capacity();
  const int n = g.size();
  // Frozen exterior spins shift the boundary fields.
  std::vector<double> h(r.fields);
  h.front() += r.exchange(g.first_site() - 1);
  h.back() += r.exchange(g.last_site());
  Vector energies(static_cast<Index>(g.dimension()));
  for (BasisIndex s = 0; s < g.dimension(); ++s) {
    double e = 0.0;
    for (int p = 0; p < n; ++p) {
      const double sp = (s >> (n - 1 - p)) & 1U ? -1.0 : 1.0;
      e += h[p] * sp;
      if (p + 1 < n) {
        const double sq = (s >> (n - 2 - p)) & 1U ? -1.0 : 1.0;
        e += r.exchanges[p + 1] * sp * sq;
      }
    }
    energies(static_cast<Index>(s)) = e;
  }
  return energies;
}

/// E(sigma) - E(sigma with site i flipped) = 2 s_i (h_i + J_i s_{i+1} + J_{i-1} s_{i-1}).
inline double single_flip_delta(const DisorderRealization& r, SpinConfiguration sigma, int site) {
  const auto& g = r.geometry;
  g.require_site(site);
  const double local = r.field(site) + r.exchange(site) * sigma.spin(g, site + 1) +
                       r.exchange(site - 1) * sigma.spin(g, site - 1);
  return 2.0 * sigma.spin(g, site) * local;
}

inline double resonance_threshold(double gamma, double exponent) { return std::pow(gamma, exponent); }

/// Smallest |Delta E_i| over the free neighbor spins; exterior neighbors stay at +1.
inline double min_flip_gap(const DisorderRealization& r, int site) {
  const auto& g = r.geometry;
  g.require_site(site);
  const bool left_free = g.contains(site - 1);
  const bool right_free = g.contains(site + 1);
  double best = std::numeric_limits<double>::infinity();
  for (int sl : {1, -1}) {
    if (sl == -1 && !left_free) continue;
    for (int sr : {1, -1}) {
      if (sr == -1 && !right_free) continue;
      const double d = 2.0 * (r.field(site) + r.exchange(site) * sr + r.exchange(site - 1) * sl);
      best = std::min(best, std::abs(d));
    }
  }
  return best;
}

inline bool is_resonant_site(const DisorderRealization& r, int site, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("resonance threshold must be positive");
  return min_flip_gap(r, site) < epsilon;
}

inline int count_resonant_sites(const DisorderRealization& r, double epsilon) {
  int count = 0;
  for (int i = r.geometry.first_site(); i <= r.geometry.last_site(); ++i) {
    count += is_resonant_site(r, i, epsilon) ? 1 : 0;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Hamiltonian
// ---------------------------------------------------------------------------

inline Matrix build_hamiltonian(const DisorderRealization& r) {
  r.validate_shape();
  const auto& g = r.geometry;
  g.require_dense_capacity();
  const auto dim = static_cast<Index>(g.dimension());
  Matrix h = Matrix::Zero(dim, dim);
  h.diagonal() = classical_energies(r);
  for (int i = g.first_site(); i <= g.last_site(); ++i) {
    const double t = r.transverse_coupling(i);
    if (t == 0.0) continue;
    const BasisIndex mask = g.bit(i);
    for (BasisIndex s = 0; s < g.dimension(); ++s) {
      h(static_cast<Index>(s), static_cast<Index>(s ^ mask)) = t;
    }
  }
  return h;
}

}  // namespace mblkam
