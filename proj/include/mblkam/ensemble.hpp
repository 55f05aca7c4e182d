#pragma once

// Disorder-ensemble Monte Carlo over independent realizations.

#include <mblkam/kam.hpp>
#include <mblkam/observables.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mblkam {

struct WeightsSpec {
  enum class Kind { uniform, gibbs };
  Kind kind = Kind::uniform;
  double beta = 0.0;

  StateWeights bind(const Vector& energies) const {
    if (kind == Kind::uniform) return UniformWeights{};
    return GibbsWeights{beta, energies};
  }
};

struct CollectSpec {
  bool spectrum = true;     // oracle eigenvalues, min gap
  bool kam = true;          // diagonalize_kam diagnostics and blocks
  bool observables = true;  // magnetization and correlations
};

struct EnsembleConfig {
  ChainGeometry geometry = ChainGeometry::centered(8);
  DistributionSpec distribution{};
  KamConfig kam{};
  int realizations = 1;
  std::uint64_t seed = 1;
  int workers = 1;
  CollectSpec collect{};
  WeightsSpec weights{};
  int magnetization_site = 0;
  std::vector<int> correlation_distances{};

  /// gamma lives in the distribution; KAM always follows it.
  KamConfig kam_config() const {
    KamConfig k = kam;
    k.gamma = distribution.gamma;
    return k;
  }

  void validate() const {
    distribution.validate();
    kam_config().validate();
    if (realizations < 1) throw std::invalid_argument("realizations must be at least 1");
    if (workers < 1) throw std::invalid_argument("workers must be at least 1");
    geometry.require_dense_capacity();
    if (collect.observables) geometry.require_site(magnetization_site);
    for (int d : correlation_distances) {
      if (d <= 0) throw std::invalid_argument("correlation distance must be positive");
      if (d >= geometry.size()) throw std::invalid_argument("correlation distance exceeds the chain");
    }
  }
};

struct BlockSummary {
  int core_first = 0;
  int core_last = 0;
  int fattened_first = 0;
  int fattened_last = 0;
};

struct CorrelationRecord {
  int distance = 0;
  int site_i = 0;
  int site_j = 0;
  double max_abs = 0.0;  // max over alpha of |<S^z_i; S^z_j>_alpha|
};

struct RealizationRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double norm_h = 0.0;
  int resonant_sites = 0;
  std::optional<double> min_gap;
  // KAM diagnostics
  bool kam_ran = false;
  bool converged = false;
  bool fully_resonant = false;
  int steps = 0;
  double final_offdiagonal = 0.0;
  double orthogonality = 0.0;
  std::optional<double> eigen_error;
  std::vector<BlockSummary> blocks;
  // observables
  std::optional<double> magnetization;
  std::vector<CorrelationRecord> correlations;
};

struct EnsembleResults {
  EnsembleConfig config;
  std::vector<RealizationRecord> records;
};

/// Sites (i, i + d) placed as centrally as the chain allows.
inline std::pair<int, int> centered_pair(const ChainGeometry& g, int distance) {
  if (distance <= 0) throw std::invalid_argument("distance 0 is excluded");
  if (distance >= g.size()) throw std::invalid_argument("distance exceeds the chain");
  const int i = g.site_at((g.size() - 1 - distance) / 2);
  return {i, i + distance};
}

/// Connected <S^z_i S^z_j> for every eigenstate, computed from flip
/// probabilities relative to each state's majority spins so small values keep
/// their relative precision.
inline Vector sz_connected(const Matrix& u, const ChainGeometry& g, int i, int j) {
  g.require_site(i);
  g.require_site(j);
  const BasisIndex bi = g.bit(i);
  const BasisIndex bj = g.bit(j);
  const auto dim = static_cast<BasisIndex>(u.rows());
  Vector out(u.cols());
  for (Index a = 0; a < u.cols(); ++a) {
    double x_i = 0.0, x_j = 0.0;
    for (BasisIndex b = 0; b < dim; ++b) {
      const double p = u(static_cast<Index>(b), a) * u(static_cast<Index>(b), a);
      if (b & bi) x_i += p;
      if (b & bj) x_j += p;
    }
    const bool flip_i = x_i > 0.5;
    const bool flip_j = x_j > 0.5;
    double yi = 0.0, yj = 0.0, yij = 0.0;
    for (BasisIndex b = 0; b < dim; ++b) {
      const double p = u(static_cast<Index>(b), a) * u(static_cast<Index>(b), a);
      const bool ti = ((b & bi) != 0) != flip_i;
      const bool tj = ((b & bj) != 0) != flip_j;
      if (ti) yi += p;
      if (tj) yj += p;
      if (ti && tj) yij += p;
    }
    const double sign = (flip_i != flip_j) ? -1.0 : 1.0;
    out(a) = 4.0 * sign * (yij - yi * yj);
  }
  return out;
}

/// One realization: sample, build, oracle and/or KAM, observables.
inline RealizationRecord run_realization(const EnsembleConfig& cfg, int index) {
  RealizationRecord rec;
  rec.index = index;
  rec.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(index));
  try {
    const auto& g = cfg.geometry;
    const auto kc = cfg.kam_config();
    const auto r = sample_disorder(cfg.distribution, g, rec.seed);
    const Matrix h = build_hamiltonian(r);
    rec.norm_h = inf_norm(h);
    if (kc.epsilon() > 0.0) rec.resonant_sites = count_resonant_sites(r, kc.epsilon());

    std::optional<Vector> oracle_values;
    if (cfg.collect.spectrum) {
      oracle_values = eigenvalues(h);
      rec.min_gap = min_level_spacing(*oracle_values);
    }

    Matrix u;
    Vector energies;
    if (cfg.collect.kam) {
      const auto kam = diagonalize_kam(h, g, kc);
      rec.kam_ran = true;
      rec.converged = kam.converged;
      rec.fully_resonant = kam.fully_resonant;
      rec.steps = static_cast<int>(kam.steps.size());
      rec.final_offdiagonal = kam.final_offdiagonal;
      rec.orthogonality = orthogonality_defect(kam.u);
      for (const auto& b : kam.blocks) {
        rec.blocks.push_back({b.core_sites.front(), b.core_sites.back(), b.fattened_first, b.fattened_last});
      }
      if (oracle_values) rec.eigen_error = sorted_max_difference(kam.final_diagonal, *oracle_values);
      if (!kam.converged) {
        rec.ok = false;
        rec.error = "KAM did not converge: " + kam.message;
        return rec;
      }
      u = kam.u;
      energies = kam.final_diagonal;
    }

    if (cfg.collect.observables) {
      if (!cfg.collect.kam) {
        auto s = diagonalize(h);
        u = std::move(s.eigenvectors);
        energies = std::move(s.eigenvalues);
      }
      const auto weights = cfg.weights.bind(energies);
      const Vector m = diagonal_expectations(u, sz_diagonal(g, cfg.magnetization_site));
      rec.magnetization = state_average(m.cwiseAbs(), weights);
      for (int d : cfg.correlation_distances) {
        const auto [i, j] = centered_pair(g, d);
        const Vector c = sz_connected(u, g, i, j);
        rec.correlations.push_back({d, i, j, c.cwiseAbs().maxCoeff()});
      }
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

/// Runs fn(i) for i in [0, count) on a pool of workers; fn writes into its own slot.
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
}

inline EnsembleResults run_ensemble(const EnsembleConfig& cfg) {
  cfg.validate();
  EnsembleResults out;
  out.config = cfg;
  out.records.resize(static_cast<std::size_t>(cfg.realizations));
  parallel_for(cfg.realizations, cfg.workers, [&](int i) { out.records[i] = run_realization(cfg, i); });
  return out;
}

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

struct MeanEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

inline MeanEstimate mean_estimate(std::span<const double> xs) {
  MeanEstimate m;
  m.count = xs.size();
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stderr_ = std::sqrt(ss / (xs.size() - 1) / xs.size());
  }
  return m;
}

inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - lo) * (xs[hi] - xs[lo]);
}

struct EnsembleSummary {
  std::size_t realizations = 0;
  std::size_t failures = 0;
  std::size_t fully_resonant = 0;
  MeanEstimate magnetization;
  MeanEstimate resonant_sites;
  MeanEstimate steps;
  double max_eigen_error_rel = 0.0;
  double max_orthogonality = 0.0;
};

inline EnsembleSummary summarize(const EnsembleResults& res) {
  EnsembleSummary s;
  s.realizations = res.records.size();
  std::vector<double> mags, sites, steps;
  for (const auto& r : res.records) {
    if (!r.ok) ++s.failures;
    if (r.fully_resonant) ++s.fully_resonant;
    if (r.magnetization) mags.push_back(*r.magnetization);
    sites.push_back(r.resonant_sites);
    if (r.kam_ran) steps.push_back(r.steps);
    if (r.eigen_error && r.norm_h > 0.0) {
      s.max_eigen_error_rel = std::max(s.max_eigen_error_rel, *r.eigen_error / r.norm_h);
    }
    s.max_orthogonality = std::max(s.max_orthogonality, r.orthogonality);
  }
  s.magnetization = mean_estimate(mags);
  s.resonant_sites = mean_estimate(sites);
  s.steps = mean_estimate(steps);
  return s;
}

// ---------------------------------------------------------------------------
// Level-attraction fit
// ---------------------------------------------------------------------------

struct LlaPoint {
  double delta = 0.0;
  double probability = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
  bool fitted = false;
};

struct LlaFit {
  int sites = 0;
  std::vector<LlaPoint> points;
  bool refused = false;
  std::string reason;
  double nu = 0.0;
  double c_n = 0.0;
  double intercept = 0.0;
  std::size_t fit_points = 0;
};

inline std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) throw std::invalid_argument("log grid needs 0 < lo < hi and >= 2 points");
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double step = std::log(hi / lo) / (points - 1);
  for (int k = 0; k < points; ++k) grid[k] = lo * std::exp(step * k);
  return grid;
}

/// Empirical P(min gap < delta) on the grid and a least-squares fit of
/// log P = nu log delta + n log C over points with at least 10 hits and P <= 1/2.
inline LlaFit lla_fit(std::span<const double> samples, int n, std::span<const double> grid) {
  if (samples.size() < 100) throw std::invalid_argument("LLA fit needs at least 100 samples");
  if (n < 1) throw std::invalid_argument("LLA fit needs a positive chain size");
  if (grid.size() < 3) throw std::invalid_argument("LLA grid needs at least 3 points");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0) || !std::isfinite(grid[k])) throw std::invalid_argument("LLA grid must be positive");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw std::invalid_argument("LLA grid must be increasing");
  }
  const double ratio = std::log(grid[1] / grid[0]);
  for (std::size_t k = 2; k < grid.size(); ++k) {
    if (std::abs(std::log(grid[k] / grid[k - 1]) - ratio) > 1e-6 * std::abs(ratio)) {
      throw std::invalid_argument("LLA grid must be log-spaced");
    }
  }
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) throw std::invalid_argument("LLA samples are all equal");

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = static_cast<double>(sorted.size());

  LlaFit fit;
  fit.sites = n;
  std::vector<double> xs, ys;
  for (double d : grid) {
    LlaPoint p;
    p.delta = d;
    p.count = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), d) - sorted.begin());
    p.probability = p.count / total;
    p.stderr_ = std::sqrt(p.probability * (1.0 - p.probability) / total);
    p.fitted = p.count >= 10 && p.probability <= 0.5;
    if (p.fitted) {
      xs.push_back(std::log(d));
      ys.push_back(std::log(p.probability));
    }
    fit.points.push_back(p);
  }
  fit.fit_points = xs.size();
  if (xs.size() < 2) {
    fit.refused = true;
    fit.reason = fit.points.back().count == 0 ? "no samples below the largest delta"
                                              : "fewer than two grid points with enough hits";
    return fit;
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  fit.nu = sxy / sxx;
  fit.intercept = my - fit.nu * mx;
  fit.c_n = std::exp(fit.intercept / n);
  return fit;
}

inline std::vector<double> min_gaps(const EnsembleResults& res) {
  std::vector<double> gaps;
  for (const auto& r : res.records) {
    if (r.min_gap) gaps.push_back(*r.min_gap);
  }
  return gaps;
}

// ---------------------------------------------------------------------------
// Single-site Monte Carlo estimators
// ---------------------------------------------------------------------------

struct ProbabilityEstimate {
  double epsilon = 0.0;
  double probability = 0.0;
  double stderr_ = 0.0;
};

/// P(site resonant) averaged over the sites of the chain; standard errors from
/// per-realization site fractions.
inline std::vector<ProbabilityEstimate> resonance_density(const DistributionSpec& dist, const ChainGeometry& g,
                                                          int samples, std::uint64_t seed,
                                                          std::span<const double> epsilons) {
  dist.validate();
  if (samples < 2) throw std::invalid_argument("resonance density needs at least 2 samples");
  for (double e : epsilons) {
    if (!(e > 0.0 && e < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  }
  const int n = g.size();
  std::vector<std::vector<double>> fractions(epsilons.size());
  for (auto& f : fractions) f.reserve(static_cast<std::size_t>(samples));
  std::vector<double> gaps(static_cast<std::size_t>(n));
  for (int s = 0; s < samples; ++s) {
    const auto r = sample_disorder(dist, g, stream_seed(seed, static_cast<std::uint64_t>(s)));
    for (int p = 0; p < n; ++p) gaps[p] = min_flip_gap(r, g.site_at(p));
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
      int hits = 0;
      for (double gap : gaps) hits += gap < epsilons[k] ? 1 : 0;
      fractions[k].push_back(static_cast<double>(hits) / n);
    }
  }
  std::vector<ProbabilityEstimate> out;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    const auto m = mean_estimate(fractions[k]);
    out.push_back({epsilons[k], m.mean, m.stderr_});
  }
  return out;
}

struct FractionalMoment {
  double s = 0.0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double tenth_mean = 0.0;  // running mean after the first tenth of the samples
  double drift = 0.0;       // |mean - tenth_mean| / mean
  std::size_t samples = 0;
};

/// E |Delta E_i|^{-s} over random sites and uniformly random configurations.
inline FractionalMoment fractional_moment(const DistributionSpec& dist, const ChainGeometry& g, int samples,
                                          std::uint64_t seed, double s) {
  dist.validate();
  if (!(s >= 0.0)) throw std::invalid_argument("fractional moment exponent must be non-negative");
  if (s >= 1.0) throw std::invalid_argument("fractional moment diverges for s >= 1");
  if (samples < 10) throw std::invalid_argument("fractional moment needs at least 10 samples");
  std::vector<double> values(static_cast<std::size_t>(samples));
  const int n = g.size();
  for (int k = 0; k < samples; ++k) {
    const auto seed_k = stream_seed(seed, static_cast<std::uint64_t>(k));
    const auto r = sample_disorder(dist, g, seed_k);
    Rng rng(splitmix64(seed_k));
    const int site = g.site_at(static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n))));
    const SpinConfiguration sigma{rng() & (g.dimension() - 1)};
    values[k] = std::pow(std::abs(single_flip_delta(r, sigma, site)), -s);
  }
  FractionalMoment fm;
  fm.s = s;
  fm.samples = values.size();
  const auto all = mean_estimate(values);
  fm.mean = all.mean;
  fm.stderr_ = all.stderr_;
  const auto tenth = mean_estimate(std::span<const double>(values).first(values.size() / 10));
  fm.tenth_mean = tenth.mean;
  fm.drift = std::abs(fm.mean - fm.tenth_mean) / std::abs(fm.mean);
  return fm;
}

// ---------------------------------------------------------------------------
// Correlation decay and block connectivity
// ---------------------------------------------------------------------------

struct DistanceSummary {
  int distance = 0;
  std::size_t count = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double satisfied = 0.0;  // fraction with max_alpha |corr| <= gamma^{d/3}
  double below_gamma_squared = 0.0;
};

struct DecayProfile {
  std::vector<DistanceSummary> rows;
  double slope = 0.0;  // of log(median) vs distance
  double intercept = 0.0;
  double r_squared = 0.0;
  bool monotone = false;
};

inline DecayProfile correlation_decay_profile(const EnsembleResults& res, std::span<const int> distances) {
  const double gamma = res.config.distribution.gamma;
  DecayProfile prof;
  for (int d : distances) {
    if (d <= 0) throw std::invalid_argument("distance 0 is excluded");
    std::vector<double> values;
    for (const auto& r : res.records) {
      for (const auto& c : r.correlations) {
        if (c.distance == d) values.push_back(c.max_abs);
      }
    }
    if (values.empty()) throw std::invalid_argument("no correlation records at distance " + std::to_string(d));
    DistanceSummary row;
    row.distance = d;
    row.count = values.size();
    row.median = quantile(values, 0.5);
    row.q25 = quantile(values, 0.25);
    row.q75 = quantile(values, 0.75);
    const double bound = std::pow(gamma, d / 3.0);
    const double sq = gamma * gamma;
    row.satisfied = std::count_if(values.begin(), values.end(), [&](double v) { return v <= bound; }) /
                    static_cast<double>(values.size());
    row.below_gamma_squared = std::count_if(values.begin(), values.end(), [&](double v) { return v <= sq; }) /
                              static_cast<double>(values.size());
    prof.rows.push_back(row);
  }
  std::vector<double> xs, ys;
  for (const auto& row : prof.rows) {
    if (row.median > 0.0) {
      xs.push_back(row.distance);
      ys.push_back(std::log(row.median));
    }
  }
  prof.monotone = xs.size() == prof.rows.size() && prof.rows.size() >= 2;
  for (std::size_t k = 1; k < prof.rows.size() && prof.monotone; ++k) {
    prof.monotone = prof.rows[k].median < prof.rows[k - 1].median;
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      sxy += (xs[k] - mx) * (ys[k] - my);
      sxx += (xs[k] - mx) * (xs[k] - mx);
      syy += (ys[k] - my) * (ys[k] - my);
    }
    prof.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    prof.intercept = my - prof.slope * mx;
    prof.r_squared = (sxx > 0.0 && syy > 0.0) ? sxy * sxy / (sxx * syy) : 1.0;
  }
  return prof;
}

struct ConnectivityPoint {
  int site_i = 0;
  int site_j = 0;
  double probability = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

inline bool same_block(const RealizationRecord& r, int i, int j) {
  if (r.fully_resonant) return true;
  const int lo = std::min(i, j);
  const int hi = std::max(i, j);
  return std::any_of(r.blocks.begin(), r.blocks.end(),
                     [&](const BlockSummary& b) { return b.core_first <= lo && hi <= b.core_last; });
}

/// P(i and j lie in one resonant block core) with binomial errors.
inline std::vector<ConnectivityPoint> block_connectivity(const EnsembleResults& res,
                                                         std::span<const std::pair<int, int>> pairs) {
  std::vector<ConnectivityPoint> out;
  for (const auto& [i, j] : pairs) {
    res.config.geometry.require_site(i);
    res.config.geometry.require_site(j);
    ConnectivityPoint p;
    p.site_i = i;
    p.site_j = j;
    std::size_t hits = 0;
    for (const auto& r : res.records) {
      if (!r.kam_ran) continue;
      ++p.count;
      hits += same_block(r, i, j) ? 1 : 0;
    }
    if (p.count == 0) throw std::invalid_argument("block connectivity needs KAM diagnostics");
    p.probability = static_cast<double>(hits) / p.count;
    p.stderr_ = std::sqrt(p.probability * (1.0 - p.probability) / p.count);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Extended per-realization observables
// ---------------------------------------------------------------------------

struct LbitRecord {
  int center = 0;
  std::vector<double> weights;  // w(r), r = 0..n
  double decay_ratio = 0.0;
  double commutator_h_rel = 0.0;  // max over i of max |[tau_i, H]| / ||H||
  double pair_commutator = 0.0;   // max over i < j of max |[tau_i, tau_j]|
  double involution = 0.0;        // max |tau_c^2 - I|
};

struct ObservableRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<double> site_magnetization;  // weighted average over states of |<S^z_i>|, per site
  std::vector<CorrelationRecord> correlations;
  std::vector<CorrelationRecord> local_correlations;  // max over products within the operator radius
  std::optional<LbitRecord> lbit;
};

/// max over alpha and over operator products O_i, O_j of |<O_i; O_j>_alpha|.
inline double local_correlation_max(const Matrix& u, std::span<const Matrix> ops_i, std::span<const Matrix> ops_j) {
  std::vector<Matrix> mi, mj;
  for (const auto& o : ops_i) mi.push_back(u.transpose() * o * u);
  for (const auto& o : ops_j) mj.push_back(u.transpose() * o * u);
  double best = 0.0;
  for (const auto& a : mi) {
    for (const auto& b : mj) {
      const Vector joint = a.cwiseProduct(b.transpose()).rowwise().sum();
      const Vector disc = a.diagonal().cwiseProduct(b.diagonal());
      best = std::max(best, (joint - disc).cwiseAbs().maxCoeff());
    }
  }
  return best;
}

inline ObservableRecord observe_realization(const EnsembleConfig& cfg, int index, int radius) {
  ObservableRecord rec;
  rec.index = index;
  rec.seed = stream_seed(cfg.seed, static_cast<std::uint64_t>(index));
  try {
    const auto& g = cfg.geometry;
    const auto r = sample_disorder(cfg.distribution, g, rec.seed);
    const Matrix h = build_hamiltonian(r);
    const auto kam = diagonalize_kam(h, g, cfg.kam_config());
    if (!kam.converged) throw std::runtime_error("KAM did not converge: " + kam.message);
    const Matrix& u = kam.u;
    const auto weights = cfg.weights.bind(kam.final_diagonal);
    for (int i = g.first_site(); i <= g.last_site(); ++i) {
      const Vector m = diagonal_expectations(u, sz_diagonal(g, i));
      rec.site_magnetization.push_back(state_average(m.cwiseAbs(), weights));
    }
    const bool small = g.size() <= kPauliMaxSites;
    for (int d : cfg.correlation_distances) {
      const auto [i, j] = centered_pair(g, d);
      rec.correlations.push_back({d, i, j, sz_connected(u, g, i, j).cwiseAbs().maxCoeff()});
      if (small) {
        const auto oi = local_operators(i, radius, g);
        const auto oj = local_operators(j, radius, g);
        rec.local_correlations.push_back({d, i, j, local_correlation_max(u, oi, oj)});
      }
    }
    if (small) {
      LbitRecord lb;
      lb.center = g.site_at((g.size() - 1) / 2);
      std::vector<Matrix> taus;
      for (int i = g.first_site(); i <= g.last_site(); ++i) taus.push_back(liom(u, i, g));
      const Matrix& tc = taus[static_cast<std::size_t>(g.position(lb.center))];
      const auto prof = locality_profile(tc, lb.center, g);
      lb.weights = prof.weights;
      lb.decay_ratio = decay_ratio(prof);
      for (const auto& t : taus) lb.commutator_h_rel = std::max(lb.commutator_h_rel, commutator_max(t, h) / inf_norm(h));
      lb.involution = max_abs(tc * tc - Matrix::Identity(h.rows(), h.cols()));
      for (std::size_t a = 0; a < taus.size(); ++a) {
        for (std::size_t b = a + 1; b < taus.size(); ++b) {
          lb.pair_commutator = std::max(lb.pair_commutator, commutator_max(taus[a], taus[b]));
        }
      }
      rec.lbit = lb;
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

inline std::vector<ObservableRecord> run_observables(const EnsembleConfig& cfg, int radius) {
  cfg.validate();
  if (radius < 0) throw std::invalid_argument("operator radius must be non-negative");
  std::vector<ObservableRecord> out(static_cast<std::size_t>(cfg.realizations));
  parallel_for(cfg.realizations, cfg.workers, [&](int i) { out[i] = observe_realization(cfg, i, radius); });
  return out;
}

}  // namespace mblkam
