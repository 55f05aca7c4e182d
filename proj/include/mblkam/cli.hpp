#pragma once

// Subcommand driver behind the mblkam executable.

#include <mblkam/svg.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace mblkam::cli {

enum ExitCode : int { ok = 0, config_error = 1, numerical_failure = 2 };

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::optional<std::string> config;
  std::string out;
  std::string in;
  std::optional<std::uint64_t> seed;
  std::optional<int> realizations;
  std::optional<int> workers;
  std::optional<double> gamma;
  std::optional<int> n;
  bool force = false;
  bool svg = false;
};

inline RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config ? load_config(*o.config) : RunConfig{};
  auto& e = cfg.ensemble;
  if (o.n) e.geometry = ChainGeometry::centered(*o.n);
  if (o.gamma) {
    e.distribution.gamma = *o.gamma;
    cfg.gammas.clear();
  }
  if (o.seed) e.seed = *o.seed;
  if (o.realizations) e.realizations = *o.realizations;
  if (o.workers) e.workers = *o.workers;
  cfg.out = o.out;
  if (o.command == "lla") {
    e.collect = {.spectrum = true, .kam = false, .observables = false};
  } else {
    e.collect = {.spectrum = e.collect.spectrum, .kam = e.collect.kam, .observables = true};
  }
  cfg.validate();
  return cfg;
}

inline void prepare_out_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw ConfigError("--out is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

inline std::string jsonl(const std::vector<Json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// diagonalize
// ---------------------------------------------------------------------------

inline int run_diagonalize(const RunConfig& cfg, std::ostream& log) {
  const auto& e = cfg.ensemble;
  const auto seed = stream_seed(e.seed, 0);
  const auto r = sample_disorder(e.distribution, e.geometry, seed);
  const Matrix h = build_hamiltonian(r);
  const auto kam = diagonalize_kam(h, e.geometry, e.kam_config());
  const Vector oracle = eigenvalues(h);
  const double norm = inf_norm(h);
  const double err = sorted_max_difference(kam.final_diagonal, oracle);
  const double orth = orthogonality_defect(kam.u);
  const bool pass = kam.converged && err <= 1e-8 * norm && orth <= 1e-10;

  std::vector<Json> steps;
  for (const auto& s : kam.steps) steps.push_back(to_json(s));
  write_atomic(cfg.out / "steps.jsonl", jsonl(steps));

  Vector sorted_kam = kam.final_diagonal;
  std::sort(sorted_kam.data(), sorted_kam.data() + sorted_kam.size());
  CsvWriter csv({"rank", "kam_energy", "oracle_energy", "abs_error"});
  for (Index a = 0; a < oracle.size(); ++a) {
    csv.row(static_cast<long>(a), sorted_kam(a), oracle(a), std::abs(sorted_kam(a) - oracle(a)));
  }
  write_atomic(cfg.out / "spectrum.csv", csv.str());

  Json blocks = Json::array();
  for (const auto& b : kam.blocks) blocks.push_back(to_json(b));
  Json summary;
  summary["command"] = "diagonalize";
  summary["status"] = pass ? "ok" : "numerical_failure";
  summary["config"] = to_json(cfg);
  summary["realization"] = {{"seed", seed},
                            {"fields", r.fields},
                            {"transverse", r.transverse},
                            {"exchanges", r.exchanges},
                            {"norm_h", norm},
                            {"resonant_sites", count_resonant_sites(r, e.kam_config().epsilon())}};
  summary["kam"] = {{"converged", kam.converged},
                    {"message", kam.message},
                    {"fully_resonant", kam.fully_resonant},
                    {"steps", kam.steps.size()},
                    {"final_offdiagonal", kam.final_offdiagonal},
                    {"orthogonality", orth},
                    {"blocks", blocks}};
  summary["oracle"] = {{"min_gap", min_level_spacing(oracle)},
                       {"max_abs_error", err},
                       {"max_rel_error", norm > 0.0 ? err / norm : 0.0}};
  write_atomic(cfg.out / "summary.json", summary.dump(2) + "\n");
  log << "diagonalize: n=" << e.geometry.size() << " steps=" << kam.steps.size()
      << " max|E_kam-E_oracle|/||H||=" << fmt(norm > 0.0 ? err / norm : 0.0) << " status="
      << summary["status"].get<std::string>() << "\n";
  return pass ? ok : numerical_failure;
}

// ---------------------------------------------------------------------------
// ensemble
// ---------------------------------------------------------------------------

inline std::vector<std::pair<int, int>> connectivity_pairs(const ChainGeometry& g) {
  std::vector<std::pair<int, int>> pairs;
  for (int d = 0; d < g.size(); ++d) {
    const int i = g.site_at((g.size() - 1 - d) / 2);
    pairs.emplace_back(i, i + d);
  }
  return pairs;
}

inline int run_ensemble_command(const RunConfig& cfg, std::ostream& log) {
  std::vector<Json> lines;
  Json by_gamma = Json::array();
  CsvWriter csv({"gamma", "table", "x", "statistic", "value"});
  std::size_t failures = 0;
  for (double gamma : cfg.gamma_list()) {
    EnsembleConfig e = cfg.ensemble;
    e.distribution.gamma = gamma;
    const auto res = run_ensemble(e);
    for (const auto& r : res.records) lines.push_back(to_json(r, gamma));
    const auto s = summarize(res);
    failures += s.failures;
    Json entry{{"gamma", gamma}, {"summary", to_json(s)}};
    csv.row(gamma, "magnetization", 0L, "mean", s.magnetization.mean);
    csv.row(gamma, "magnetization", 0L, "stderr", s.magnetization.stderr_);
    if (!e.correlation_distances.empty() && s.magnetization.count > 0) {
      const auto prof = correlation_decay_profile(res, e.correlation_distances);
      entry["correlation_decay"] = to_json(prof);
      for (const auto& row : prof.rows) {
        csv.row(gamma, "correlation", static_cast<long>(row.distance), "median", row.median);
        csv.row(gamma, "correlation", static_cast<long>(row.distance), "q25", row.q25);
        csv.row(gamma, "correlation", static_cast<long>(row.distance), "q75", row.q75);
        csv.row(gamma, "correlation", static_cast<long>(row.distance), "satisfied", row.satisfied);
      }
    }
    if (e.collect.kam) {
      const auto conn = block_connectivity(res, connectivity_pairs(e.geometry));
      entry["connectivity"] = to_json(conn);
      for (const auto& p : conn) {
        csv.row(gamma, "connectivity", static_cast<long>(p.site_j - p.site_i), "probability", p.probability);
        csv.row(gamma, "connectivity", static_cast<long>(p.site_j - p.site_i), "stderr", p.stderr_);
      }
    }
    if (s.magnetization.count > 0) {
      log << "ensemble: gamma=" << fmt(gamma) << " R=" << s.realizations << " mean Av|<S^z>|="
          << fmt(s.magnetization.mean) << " +- " << fmt(s.magnetization.stderr_) << " failures=" << s.failures << "\n";
    }
    by_gamma.push_back(entry);
  }
  write_atomic(cfg.out / "records.jsonl", jsonl(lines));
  write_atomic(cfg.out / "profiles.csv", csv.str());
  Json summary;
  summary["command"] = "ensemble";
  summary["status"] = failures == 0 ? "ok" : "partial_failure";
  summary["config"] = to_json(cfg);
  summary["by_gamma"] = by_gamma;
  write_atomic(cfg.out / "summary.json", summary.dump(2) + "\n");
  return ok;
}

// ---------------------------------------------------------------------------
// lla
// ---------------------------------------------------------------------------

inline int run_lla(const RunConfig& cfg, std::ostream& log) {
  const auto res = run_ensemble(cfg.ensemble);
  std::vector<Json> lines;
  for (const auto& r : res.records) lines.push_back(to_json(r, cfg.ensemble.distribution.gamma));
  write_atomic(cfg.out / "records.jsonl", jsonl(lines));
  const auto gaps = min_gaps(res);
  const auto grid = log_grid(cfg.lla.delta_min, cfg.lla.delta_max, cfg.lla.points);
  const auto fit = lla_fit(gaps, cfg.ensemble.geometry.size(), grid);
  CsvWriter csv({"delta", "probability", "stderr", "count", "fitted"});
  for (const auto& p : fit.points) csv.row(p.delta, p.probability, p.stderr_, p.count, p.fitted ? 1 : 0);
  write_atomic(cfg.out / "profiles.csv", csv.str());
  Json summary;
  summary["command"] = "lla";
  summary["status"] = "ok";
  summary["config"] = to_json(cfg);
  summary["samples"] = gaps.size();
  summary["failures"] = summarize(res).failures;
  summary["lla"] = to_json(fit);
  write_atomic(cfg.out / "summary.json", summary.dump(2) + "\n");
  if (fit.refused) {
    log << "lla: fit refused (" << fit.reason << ")\n";
  } else {
    log << "lla: nu=" << fmt(fit.nu) << " C_n=" << fmt(fit.c_n) << " from " << fit.fit_points << " grid points\n";
  }
  return ok;
}

// ---------------------------------------------------------------------------
// observables
// ---------------------------------------------------------------------------

inline int run_observables_command(const RunConfig& cfg, std::ostream& log) {
  const auto& e = cfg.ensemble;
  const auto recs = run_observables(e, cfg.operator_radius);
  CsvWriter csv({"seed", "aggregation", "observable", "value"});
  const std::string agg = e.weights.kind == WeightsSpec::Kind::uniform ? "uniform" : "gibbs";
  std::size_t failures = 0;
  std::vector<std::vector<double>> profiles;
  std::vector<double> ratios;
  double worst_commutator = 0.0, worst_pair = 0.0;
  for (const auto& r : recs) {
    if (!r.ok) {
      ++failures;
      continue;
    }
    for (std::size_t p = 0; p < r.site_magnetization.size(); ++p) {
      csv.row(r.seed, agg + "_mean_abs",
              "sz_" + std::to_string(e.geometry.site_at(static_cast<int>(p))), r.site_magnetization[p]);
    }
    for (const auto& c : r.correlations) {
      csv.row(r.seed, "max_alpha", "szsz_d" + std::to_string(c.distance), c.max_abs);
    }
    for (const auto& c : r.local_correlations) {
      csv.row(r.seed, "max_alpha", "local_d" + std::to_string(c.distance), c.max_abs);
    }
    if (r.lbit) {
      csv.row(r.seed, "center", "lbit_decay_ratio", r.lbit->decay_ratio);
      csv.row(r.seed, "all_sites", "lbit_commutator_h_rel", r.lbit->commutator_h_rel);
      csv.row(r.seed, "all_pairs", "lbit_pair_commutator", r.lbit->pair_commutator);
      profiles.push_back(r.lbit->weights);
      ratios.push_back(r.lbit->decay_ratio);
      worst_commutator = std::max(worst_commutator, r.lbit->commutator_h_rel);
      worst_pair = std::max(worst_pair, r.lbit->pair_commutator);
    }
  }
  write_atomic(cfg.out / "observables.csv", csv.str());
  Json summary;
  summary["command"] = "observables";
  summary["status"] = failures == 0 ? "ok" : "partial_failure";
  summary["config"] = to_json(cfg);
  summary["failures"] = failures;
  if (!profiles.empty()) {
    std::vector<double> median;
    for (std::size_t k = 0; k < profiles.front().size(); ++k) {
      std::vector<double> col;
      for (const auto& p : profiles) col.push_back(p[k]);
      median.push_back(quantile(col, 0.5));
    }
    summary["lbit"] = {{"median_weights", median},
                       {"median_decay_ratio", quantile(ratios, 0.5)},
                       {"max_commutator_h_rel", worst_commutator},
                       {"max_pair_commutator", worst_pair}};
    log << "observables: median l-bit decay ratio q=" << fmt(quantile(ratios, 0.5)) << "\n";
  }
  write_atomic(cfg.out / "summary.json", summary.dump(2) + "\n");
  log << "observables: " << recs.size() - failures << " realizations, " << failures << " failures\n";
  return ok;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::vector<double> json_doubles(const Json& arr, const char* key) {
  std::vector<double> out;
  for (const auto& x : arr) out.push_back(x.at(key).is_null() ? std::nan("") : x.at(key).get<double>());
  return out;
}

/// Plots from a results directory; reads only persisted files.
inline std::vector<std::pair<std::string, std::string>> render_plots(const std::filesystem::path& dir) {
  const Json summary = Json::parse(read_file(dir / "summary.json"));
  const auto command = summary.at("command").get<std::string>();
  std::vector<std::pair<std::string, std::string>> plots;
  if (command == "ensemble") {
    svg::Plot mag{"Eigenstate magnetization vs gamma", "gamma", "E Av_alpha |<S^z_0>_alpha|", true, false, {}};
    svg::Series ms{"mean", {}, {}, {}};
    svg::Plot corr{"Correlation decay", "|i - j|", "median max_alpha |<S^z_i; S^z_j>|", false, true, {}};
    svg::Plot conn{"Block connectivity", "|i - j|", "P(same resonant block)", false, false, {}};
    for (const auto& g : summary.at("by_gamma")) {
      const double gamma = g.at("gamma").get<double>();
      const auto& m = g.at("summary").at("magnetization");
      if (m.at("count").get<std::size_t>() > 0) {
        ms.x.push_back(gamma);
        ms.y.push_back(m.at("mean").get<double>());
        ms.err.push_back(m.at("stderr").get<double>());
      }
      const std::string label = "gamma=" + fmt(gamma);
      if (g.contains("correlation_decay")) {
        const auto& rows = g.at("correlation_decay").at("rows");
        corr.series.push_back({label, json_doubles(rows, "distance"), json_doubles(rows, "median"), {}});
      }
      if (g.contains("connectivity")) {
        const auto& rows = g.at("connectivity");
        conn.series.push_back({label, json_doubles(rows, "distance"), json_doubles(rows, "probability"),
                               json_doubles(rows, "stderr")});
      }
    }
    if (!ms.x.empty()) {
      mag.series.push_back(ms);
      plots.emplace_back("magnetization_vs_gamma.svg", svg::render(mag));
    }
    if (!corr.series.empty()) plots.emplace_back("correlation_decay.svg", svg::render(corr));
    if (!conn.series.empty()) plots.emplace_back("block_connectivity.svg", svg::render(conn));
  } else if (command == "lla") {
    const auto& pts = summary.at("lla").at("points");
    svg::Plot p{"Level-spacing CDF", "delta", "P(min gap < delta)", true, true, {}};
    p.series.push_back({"empirical", json_doubles(pts, "delta"), json_doubles(pts, "probability"),
                        json_doubles(pts, "stderr")});
    const auto& fit = summary.at("lla");
    if (!fit.at("refused").get<bool>()) {
      svg::Series line{"fit nu=" + fmt(fit.at("nu").get<double>()), {}, {}, {}};
      for (const auto& pt : pts) {
        if (!pt.at("fitted").get<bool>()) continue;
        const double d = pt.at("delta").get<double>();
        line.x.push_back(d);
        line.y.push_back(std::exp(fit.at("intercept").get<double>()) * std::pow(d, fit.at("nu").get<double>()));
      }
      p.series.push_back(line);
    }
    plots.emplace_back("lla_cdf.svg", svg::render(p));
  } else if (command == "observables") {
    if (summary.contains("lbit")) {
      const auto w = summary.at("lbit").at("median_weights").get<std::vector<double>>();
      svg::Plot p{"l-bit weight profile (median)", "r", "w(r)", false, true, {}};
      svg::Series s{"tau^z_center", {}, {}, {}};
      for (std::size_t r = 0; r < w.size(); ++r) {
        s.x.push_back(static_cast<double>(r));
        s.y.push_back(w[r]);
      }
      p.series.push_back(s);
      plots.emplace_back("lbit_profile.svg", svg::render(p));
    }
  } else if (command == "diagonalize") {
    svg::Plot p{"KAM convergence", "step", "max off-diagonal", false, true, {}};
    svg::Series s{"after step", {}, {}, {}};
    std::istringstream in(read_file(dir / "steps.jsonl"));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = Json::parse(line);
      s.x.push_back(j.at("step").get<double>());
      s.y.push_back(j.at("offdiag_max_after").get<double>());
    }
    p.series.push_back(s);
    plots.emplace_back("kam_convergence.svg", svg::render(p));
  } else {
    throw ConfigError("unknown results kind '" + command + "' in summary.json");
  }
  return plots;
}

inline void write_plots(const std::filesystem::path& in, const std::filesystem::path& out) {
  for (const auto& [name, content] : render_plots(in)) write_atomic(out / name, content);
}

inline int run_report(const Options& o, std::ostream& log) {
  namespace fs = std::filesystem;
  if (o.in.empty()) throw ConfigError("report needs --in");
  if (!fs::exists(fs::path(o.in) / "summary.json")) throw ConfigError("no summary.json in " + o.in);
  const fs::path out = o.out.empty() ? fs::path(o.in) : fs::path(o.out);
  if (!o.out.empty()) prepare_out_dir(out, o.force);
  const Json summary = Json::parse(read_file(fs::path(o.in) / "summary.json"));
  log << "report: " << summary.at("command").get<std::string>() << " results, status "
      << summary.value("status", std::string("unknown")) << "\n";
  if (o.svg) {
    const auto plots = render_plots(o.in);
    for (const auto& [name, content] : plots) {
      write_atomic(out / name, content);
      log << "  wrote " << (out / name).string() << "\n";
    }
  }
  return ok;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_command(int argc, const char* const* argv, std::ostream& log = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"KAM-style diagonalization of disordered Ising chains"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "TOML run configuration");
    sub->add_option("--out", o.out, "results directory")->required();
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--realizations", o.realizations, "number of disorder realizations");
    sub->add_option("--workers", o.workers, "worker threads");
    sub->add_option("--gamma", o.gamma, "transverse coupling scale gamma");
    sub->add_option("--n", o.n, "chain length (centered geometry)");
    sub->add_flag("--force", o.force, "overwrite a non-empty results directory");
    sub->add_flag("--svg", o.svg, "also render SVG plots");
  };
  for (const char* name : {"diagonalize", "ensemble", "lla", "observables"}) {
    add_common(app.add_subcommand(name, std::string("run ") + name));
  }
  auto* report = app.add_subcommand("report", "re-render plots from an existing results directory");
  report->add_option("--in", o.in, "results directory to read")->required();
  report->add_option("--out", o.out, "directory for plots (default: --in)");
  report->add_flag("--svg", o.svg, "render SVG plots");
  report->add_flag("--force", o.force, "overwrite a non-empty plot directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, log, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, log, err);
    return config_error;
  }
  o.command = app.get_subcommands().front()->get_name();

  try {
    if (o.command == "report") return run_report(o, log);
    const RunConfig cfg = resolve_config(o);
    prepare_out_dir(cfg.out, o.force);
    std::ostringstream echo;
    echo << to_toml(cfg) << "\n";
    write_atomic(cfg.out / "config.toml", echo.str());
    int code = ok;
    if (o.command == "diagonalize") code = run_diagonalize(cfg, log);
    if (o.command == "ensemble") code = run_ensemble_command(cfg, log);
    if (o.command == "lla") code = run_lla(cfg, log);
    if (o.command == "observables") code = run_observables_command(cfg, log);
    if (o.svg) write_plots(cfg.out, cfg.out);
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::length_error& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::out_of_range& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  }
}

}  // namespace mblkam::cli
