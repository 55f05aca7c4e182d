// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Pass a criterion number (1-10) to run only that one.

#include <mblkam/cli.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>

using namespace mblkam;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

KamConfig desk_kam(double gamma) {
  KamConfig k;
  k.gamma = gamma;
  k.epsilon_exponent = 0.5;
  return k;
}

EnsembleConfig desk_ensemble(int n, double gamma, int realizations, std::uint64_t seed) {
  EnsembleConfig c;
  c.geometry = ChainGeometry::centered(n);
  c.distribution.gamma = gamma;
  c.kam.epsilon_exponent = 0.5;
  c.realizations = realizations;
  c.seed = seed;
  return c;
}

DistributionSpec no_exchange() {
  DistributionSpec d;
  d.exchange = Distribution::constant(0.0);
  return d;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mblkam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log;
  return cli::run_command(static_cast<int>(argv.size()), argv.data(), log, std::cerr);
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  double worst_err = 0.0, worst_orth = 0.0;
  int failures = 0, runs = 0, fully = 0;
  for (int n : {4, 6, 8}) {
    for (double gamma : {0.005, 0.01, 0.05}) {
      for (std::uint64_t seed = 0; seed < 50; ++seed) {
        DistributionSpec d;
        d.gamma = gamma;
        const auto g = ChainGeometry::centered(n);
        const Matrix h = build_hamiltonian(sample_disorder(d, g, stream_seed(1000 + n, seed)));
        const auto res = diagonalize_kam(h, g, desk_kam(gamma));
        ++runs;
        if (!res.converged) ++failures;
        if (res.fully_resonant) ++fully;
        worst_err = std::max(worst_err, sorted_max_difference(res.final_diagonal, eigenvalues(h)) / inf_norm(h));
        worst_orth = std::max(worst_orth, orthogonality_defect(res.u));
      }
    }
  }
  const double t = seconds_since(t0);
  return {failures == 0 && worst_err <= 1e-8 && worst_orth <= 1e-10 && t <= 300.0,
          std::to_string(runs) + " runs, max err/||H||=" + num(worst_err) + ", max|U^TU-I|=" + num(worst_orth) +
              ", fully resonant " + std::to_string(fully) + ", " + num(t) + " s"};
}

Outcome first_order_cancellation() {
  const auto band = scale_bands(15.0 / 8.0, 0).bands[0];
  int violations = 0;
  double worst = 0.0;
  for (int a = 0; a < 10; ++a) {
    const double de = 0.1 * std::pow(20.0, a / 9.0);
    for (int b = 0; b < 10; ++b) {
      const double ratio = -0.1 + 0.2 * b / 9.0;
      const double j = ratio * de;
      Matrix h(2, 2);
      h << 0.3 + de / 2, j, j, 0.3 - de / 2;
      const Matrix r = rotate(h, build_generator(h, band, 1.0));
      const double bound = 2.0 * std::abs(j) * std::abs(ratio);
      const double off = std::abs(r(0, 1));
      if (off > bound) ++violations;
      if (bound > 0.0) worst = std::max(worst, off / bound);
    }
  }
  return {violations == 0, "100 grid points, worst off/bound=" + num(worst)};
}

Outcome magnetization() {
  const auto t0 = Clock::now();
  std::vector<MeanEstimate> m;
  std::size_t failures = 0;
  const std::vector<double> gammas{0.005, 0.01, 0.02};
  for (double gamma : gammas) {
    auto cfg = desk_ensemble(8, gamma, 500, 31);
    cfg.collect.spectrum = false;
    const auto s = summarize(run_ensemble(cfg));
    failures += s.failures;
    m.push_back(s.magnetization);
  }
  bool monotone = true;
  for (std::size_t k = 1; k < m.size(); ++k) {
    const double tol = 2.0 * std::hypot(m[k].stderr_, m[k - 1].stderr_);
    monotone = monotone && m[k].mean <= m[k - 1].mean + tol;
  }
  const double t = seconds_since(t0);
  std::string detail;
  for (std::size_t k = 0; k < m.size(); ++k) {
    detail += "gamma=" + num(gammas[k]) + ": " + num(m[k].mean) + "+-" + num(m[k].stderr_) + "; ";
  }
  return {failures == 0 && m[1].mean >= 0.99 && monotone && t <= 900.0, detail + num(t) + " s"};
}

Outcome correlation_decay() {
  const auto t0 = Clock::now();
  auto cfg = desk_ensemble(10, 0.01, 200, 41);
  cfg.collect.spectrum = false;
  cfg.correlation_distances = {2, 3, 4, 5, 6, 7};
  const auto res = run_ensemble(cfg);
  const auto s = summarize(res);
  const auto prof = correlation_decay_profile(res, cfg.correlation_distances);
  double at6 = 0.0;
  for (const auto& row : prof.rows) {
    if (row.distance == 6) at6 = row.below_gamma_squared;
  }
  const double slope_bound = 0.5 * std::log(0.01) / 3.0;
  const bool linear = prof.monotone && prof.r_squared >= 0.9 && prof.slope <= slope_bound;
  const double t = seconds_since(t0);
  return {s.failures == 0 && at6 >= 0.8 && linear,
          "fraction<=1e-4 at d=6: " + num(at6) + ", log-median slope " + num(prof.slope) + " (bound " +
              num(slope_bound) + "), R^2=" + num(prof.r_squared) + ", monotone=" + (prof.monotone ? "yes" : "no") +
              ", " + num(t) + " s"};
}

Outcome lla() {
  std::string detail;
  bool pass = true;
  const auto grid = log_grid(1e-5, 1.0, 26);
  for (double nu : {0.5, 1.0}) {
    Rng rng(stream_seed(5, static_cast<std::uint64_t>(nu * 10)));
    std::vector<double> xs(10000);
    for (auto& x : xs) x = std::pow(uniform01(rng), 1.0 / nu);
    const auto fit = lla_fit(xs, 6, grid);
    pass = pass && !fit.refused && std::abs(fit.nu - nu) <= 0.15;
    detail += "synthetic nu=" + num(nu) + " -> " + num(fit.nu) + "; ";
  }
  auto cfg = desk_ensemble(6, 0.05, 2000, 51);
  cfg.collect = {.spectrum = true, .kam = false, .observables = false};
  const auto gaps = min_gaps(run_ensemble(cfg));
  const auto fit = lla_fit(gaps, 6, log_grid(1e-6, 1.0, 25));
  bool cdf = true;
  for (std::size_t k = 1; k < fit.points.size(); ++k) cdf = cdf && fit.points[k].probability >= fit.points[k - 1].probability;
  pass = pass && gaps.size() == 2000 && !fit.refused && fit.nu > 0.5 && cdf;
  detail += "model n=6 gamma=0.05: nu=" + num(fit.nu) + ", C_n=" + num(fit.c_n) + ", CDF monotone=" + (cdf ? "yes" : "no");
  return {pass, detail};
}

Outcome fractional_moment_check() {
  const double s = 2.0 / 7.0;
  const auto fm = fractional_moment(no_exchange(), ChainGeometry::centered(3), 1000000, 61, s);
  const double exact = std::pow(2.0, -s) * 7.0 / 5.0;
  const double z = (fm.mean - exact) / fm.stderr_;
  return {std::abs(z) <= 3.0, "estimate " + num(fm.mean) + " +- " + num(fm.stderr_) + " vs " + num(exact) +
                                  " (z=" + num(z) + "), tenth-sample drift " + num(fm.drift)};
}

Outcome resonance_density_check() {
  const std::vector<double> eps{0.02, 0.05, 0.1};
  const auto g = ChainGeometry::centered(8);
  const auto free = resonance_density(no_exchange(), g, 125000, 71, eps);
  bool pass = true;
  std::string detail = "J=0 z-scores:";
  for (const auto& e : free) {
    const double z = (e.probability - e.epsilon / 2.0) / e.stderr_;
    pass = pass && std::abs(z) <= 3.0;
    detail += " " + num(z);
  }
  const auto full = resonance_density({}, g, 125000, 72, eps);
  double lo = INFINITY, hi = 0.0;
  detail += "; full model P/eps:";
  for (const auto& e : full) {
    const double r = e.probability / e.epsilon;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    detail += " " + num(r);
  }
  pass = pass && hi / lo <= 2.0;
  return {pass, detail};
}

Outcome lbit_locality() {
  auto cfg = desk_ensemble(6, 0.01, 50, 81);
  const auto recs = run_observables(cfg, 0);
  std::vector<double> q;
  double comm = 0.0, pair = 0.0;
  std::size_t failures = 0;
  for (const auto& r : recs) {
    if (!r.ok || !r.lbit) {
      ++failures;
      continue;
    }
    q.push_back(r.lbit->decay_ratio);
    comm = std::max(comm, r.lbit->commutator_h_rel);
    pair = std::max(pair, r.lbit->pair_commutator);
  }
  const double median = q.empty() ? INFINITY : quantile(q, 0.5);
  return {failures == 0 && median <= 0.2 && comm <= 1e-8 && pair <= 1e-8,
          "median q=" + num(median) + ", max|[tau,H]|/||H||=" + num(comm) + ", max|[tau_i,tau_j]|=" + num(pair)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mblkam_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  write_atomic(root / "run.toml",
               "[chain]\nn = 6\n[disorder]\ngammas = [0.01, 0.05]\n[kam]\nepsilon_exponent = 0.5\n"
               "[ensemble]\nrealizations = 40\nseed = 9\ncorrelation_distances = [1, 2, 3, 4]\n");
  std::vector<std::string> records;
  bool ok = true;
  for (int w : {1, 4, 16}) {
    const auto out = root / ("w" + std::to_string(w));
    ok = ok && run_cli({"ensemble", "--config", (root / "run.toml").string(), "--workers", std::to_string(w), "--out",
                        out.string()}) == 0;
    records.push_back(read_file(out / "records.jsonl"));
  }
  const bool same_records = ok && records[0] == records[1] && records[0] == records[2];
  ok = ok && run_cli({"report", "--in", (root / "w1").string(), "--svg", "--out", (root / "r1").string()}) == 0;
  ok = ok && run_cli({"report", "--in", (root / "w4").string(), "--svg", "--out", (root / "r2").string()}) == 0;
  bool same_svg = ok;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(root / "r1")) {
    if (entry.path().extension() != ".svg") continue;
    ++files;
    same_svg = same_svg && read_file(entry.path()) == read_file(root / "r2" / entry.path().filename());
  }
  fs::remove_all(root);
  return {same_records && same_svg && files >= 3,
          std::string("records.jsonl identical for workers {1,4,16}: ") + (same_records ? "yes" : "no") + ", " +
              std::to_string(files) + " SVGs identical: " + (same_svg ? "yes" : "no")};
}

Outcome performance() {
  auto t0 = Clock::now();
  auto cfg = desk_ensemble(10, 0.01, 1, 91);
  for (int d = 1; d < 10; ++d) cfg.correlation_distances.push_back(d);
  const auto rec = observe_realization(cfg, 0, 1);
  const double t10 = seconds_since(t0);

  const fs::path out = fs::temp_directory_path() / "mblkam_acceptance_n12";
  fs::remove_all(out);
  t0 = Clock::now();
  const int code = run_cli({"diagonalize", "--n", "12", "--gamma", "0.01", "--seed", "3", "--out", out.string()});
  const double t12 = seconds_since(t0);
  fs::remove_all(out);
  return {rec.ok && t10 <= 10.0 && code == 0 && t12 <= 120.0,
          "n=10 end-to-end " + num(t10) + " s, n=12 diagonalize " + num(t12) + " s (exit " + std::to_string(code) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"first-order cancellation", first_order_cancellation},
      {"eigenstate magnetization", magnetization},
      {"correlation decay", correlation_decay},
      {"level-attraction estimator", lla},
      {"fractional moment", fractional_moment_check},
      {"resonance density", resonance_density_check},
      {"l-bit quasi-locality", lbit_locality},
      {"determinism", determinism},
      {"performance envelope", performance},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (only != 0 && only != static_cast<int>(k) + 1) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << " (" << criteria[k].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
