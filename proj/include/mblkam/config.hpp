#pragma once

// Run configuration: TOML in, JSON echo out.

#include <mblkam/ensemble.hpp>

#include <toml.hpp>
#include <json.hpp>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace mblkam {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LlaGrid {
  double delta_min = 1e-6;
  double delta_max = 1.0;
  int points = 25;
};

struct RunConfig {
  EnsembleConfig ensemble{};
  std::vector<double> gammas;  // sweep; empty means the single distribution gamma
  LlaGrid lla{};
  int operator_radius = 1;
  std::filesystem::path out;

  std::vector<double> gamma_list() const {
    return gammas.empty() ? std::vector<double>{ensemble.distribution.gamma} : gammas;
  }

  void validate() const {
    ensemble.validate();
    for (double g : gammas) {
      if (!std::isfinite(g) || g < 0.0) throw std::invalid_argument("sweep gamma must be finite and non-negative");
    }
    if (operator_radius < 0) throw std::invalid_argument("operator radius must be non-negative");
    log_grid(lla.delta_min, lla.delta_max, lla.points);
  }
};

namespace detail {

template <class T>
T toml_value(const toml::node_view<const toml::node>& node, T fallback, const std::string& key) {
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node.value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node.value<std::string>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node.value<bool>()) return *v;
  } else {
    if (node.is_integer()) return static_cast<T>(*node.value<std::int64_t>());
  }
  throw ConfigError("config key '" + key + "' has the wrong type");
}

inline Distribution toml_distribution(const toml::node_view<const toml::node>& node, Distribution fallback,
                                      const std::string& key) {
  if (!node) return fallback;
  if (node.is_number()) return Distribution::constant(*node.value<double>());
  if (const auto* arr = node.as_array(); arr && arr->size() == 2) {
    const auto lo = (*arr)[0].value<double>();
    const auto hi = (*arr)[1].value<double>();
    if (lo && hi) return Distribution::uniform(*lo, *hi);
  }
  throw ConfigError("config key '" + key + "' must be a number or a [lo, hi] pair");
}

template <class T>
std::vector<T> toml_list(const toml::node_view<const toml::node>& node, const std::string& key) {
  std::vector<T> out;
  if (!node) return out;
  const auto* arr = node.as_array();
  if (!arr) throw ConfigError("config key '" + key + "' must be an array");
  for (const auto& item : *arr) {
    const auto v = item.value<T>();
    if (!v) throw ConfigError("config key '" + key + "' has an entry of the wrong type");
    out.push_back(*v);
  }
  return out;
}

inline void reject_unknown(const toml::table& table, std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  for (const auto& [key, value] : table) {
    if (std::find(allowed.begin(), allowed.end(), key.str()) == allowed.end()) {
      throw ConfigError("unknown config key '" + where + std::string(key.str()) + "'");
    }
  }
}

}  // namespace detail

inline RunConfig parse_config(const toml::table& root) {
  using detail::toml_value;
  detail::reject_unknown(root, {"chain", "disorder", "kam", "ensemble", "lla", "observables"}, "");
  for (const auto& [key, value] : root) {
    if (!value.is_table()) throw ConfigError("config section '" + std::string(key.str()) + "' must be a table");
  }
  auto section = [&](const char* name) -> const toml::table& {
    static const toml::table empty;
    const auto* t = root[name].as_table();
    return t ? *t : empty;
  };

  RunConfig cfg;
  auto& e = cfg.ensemble;

  const auto& chain = section("chain");
  detail::reject_unknown(chain, {"n", "K", "K_prime"}, "chain.");
  const toml::node_view<const toml::node> cv{chain};
  if (chain.contains("n")) {
    if (chain.contains("K") || chain.contains("K_prime")) throw ConfigError("give either chain.n or chain.K/K_prime");
    e.geometry = ChainGeometry::centered(toml_value<int>(cv["n"], 8, "chain.n"));
  } else if (chain.contains("K") || chain.contains("K_prime")) {
    e.geometry = ChainGeometry(toml_value<int>(cv["K"], 0, "chain.K"), toml_value<int>(cv["K_prime"], 0, "chain.K_prime"));
  }

  const auto& dis = section("disorder");
  detail::reject_unknown(dis, {"gamma", "gammas", "field", "transverse", "exchange"}, "disorder.");
  const toml::node_view<const toml::node> dv{dis};
  e.distribution.gamma = toml_value<double>(dv["gamma"], e.distribution.gamma, "disorder.gamma");
  cfg.gammas = detail::toml_list<double>(dv["gammas"], "disorder.gammas");
  e.distribution.field = detail::toml_distribution(dv["field"], e.distribution.field, "disorder.field");
  e.distribution.transverse = detail::toml_distribution(dv["transverse"], e.distribution.transverse, "disorder.transverse");
  e.distribution.exchange = detail::toml_distribution(dv["exchange"], e.distribution.exchange, "disorder.exchange");

  const auto& kam = section("kam");
  detail::reject_unknown(kam, {"epsilon_exponent", "growth", "rho", "tol_offdiag", "k_max", "merge_constant"}, "kam.");
  const toml::node_view<const toml::node> kv{kam};
  e.kam.epsilon_exponent = toml_value<double>(kv["epsilon_exponent"], e.kam.epsilon_exponent, "kam.epsilon_exponent");
  e.kam.growth = toml_value<double>(kv["growth"], e.kam.growth, "kam.growth");
  if (kam.contains("rho")) e.kam.rho = toml_value<double>(kv["rho"], 0.0, "kam.rho");
  e.kam.tol_offdiag = toml_value<double>(kv["tol_offdiag"], e.kam.tol_offdiag, "kam.tol_offdiag");
  e.kam.k_max = toml_value<int>(kv["k_max"], e.kam.k_max, "kam.k_max");
  e.kam.merge_constant = toml_value<double>(kv["merge_constant"], e.kam.merge_constant, "kam.merge_constant");

  const auto& ens = section("ensemble");
  detail::reject_unknown(ens, {"realizations", "seed", "workers", "weights", "beta", "magnetization_site",
                               "correlation_distances", "collect_kam", "collect_spectrum"},
                         "ensemble.");
  const toml::node_view<const toml::node> ev{ens};
  e.realizations = toml_value<int>(ev["realizations"], e.realizations, "ensemble.realizations");
  e.seed = toml_value<std::uint64_t>(ev["seed"], e.seed, "ensemble.seed");
  e.workers = toml_value<int>(ev["workers"], e.workers, "ensemble.workers");
  const auto weights = toml_value<std::string>(ev["weights"], "uniform", "ensemble.weights");
  if (weights == "uniform") {
    e.weights.kind = WeightsSpec::Kind::uniform;
  } else if (weights == "gibbs") {
    e.weights.kind = WeightsSpec::Kind::gibbs;
  } else {
    throw ConfigError("ensemble.weights must be \"uniform\" or \"gibbs\"");
  }
  e.weights.beta = toml_value<double>(ev["beta"], 0.0, "ensemble.beta");
  e.magnetization_site = toml_value<int>(ev["magnetization_site"], 0, "ensemble.magnetization_site");
  e.correlation_distances.clear();
  for (auto d : detail::toml_list<std::int64_t>(ev["correlation_distances"], "ensemble.correlation_distances")) {
    e.correlation_distances.push_back(static_cast<int>(d));
  }
  e.collect.kam = toml_value<bool>(ev["collect_kam"], true, "ensemble.collect_kam");
  e.collect.spectrum = toml_value<bool>(ev["collect_spectrum"], true, "ensemble.collect_spectrum");

  const auto& lla = section("lla");
  detail::reject_unknown(lla, {"delta_min", "delta_max", "points"}, "lla.");
  const toml::node_view<const toml::node> lv{lla};
  cfg.lla.delta_min = toml_value<double>(lv["delta_min"], cfg.lla.delta_min, "lla.delta_min");
  cfg.lla.delta_max = toml_value<double>(lv["delta_max"], cfg.lla.delta_max, "lla.delta_max");
  cfg.lla.points = toml_value<int>(lv["points"], cfg.lla.points, "lla.points");

  const auto& obs = section("observables");
  detail::reject_unknown(obs, {"radius"}, "observables.");
  const toml::node_view<const toml::node> ov{obs};
  cfg.operator_radius = toml_value<int>(ov["radius"], cfg.operator_radius, "observables.radius");
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse " << path.string() << ": " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
}

inline RunConfig parse_config_string(std::string_view text) {
  try {
    return parse_config(toml::parse(text));
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("cannot parse config: ") + std::string(e.description()));
  }
}

// ---------------------------------------------------------------------------
// JSON echo
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const Distribution& d) {
  if (d.kind() == Distribution::Kind::constant) return {{"kind", "constant"}, {"value", d.lower()}};
  return {{"kind", "uniform"}, {"lo", d.lower()}, {"hi", d.upper()}};
}

inline nlohmann::ordered_json to_json(const RunConfig& cfg) {
  const auto& e = cfg.ensemble;
  nlohmann::ordered_json j;
  j["chain"] = {{"K", e.geometry.left_end}, {"K_prime", e.geometry.right_end}, {"n", e.geometry.size()}};
  j["disorder"] = {{"gamma", e.distribution.gamma},
                   {"gammas", cfg.gamma_list()},
                   {"field", to_json(e.distribution.field)},
                   {"transverse", to_json(e.distribution.transverse)},
                   {"exchange", to_json(e.distribution.exchange)}};
  j["kam"] = {{"epsilon_exponent", e.kam.epsilon_exponent},
              {"growth", e.kam.growth},
              {"rho", e.kam.rho ? nlohmann::ordered_json(*e.kam.rho) : nlohmann::ordered_json(nullptr)},
              {"tol_offdiag", e.kam.tol_offdiag},
              {"k_max", e.kam.k_max},
              {"merge_constant", e.kam.merge_constant}};
  j["ensemble"] = {{"realizations", e.realizations},
                   {"seed", e.seed},
                   {"workers", e.workers},
                   {"weights", e.weights.kind == WeightsSpec::Kind::uniform ? "uniform" : "gibbs"},
                   {"beta", e.weights.beta},
                   {"magnetization_site", e.magnetization_site},
                   {"correlation_distances", e.correlation_distances},
                   {"collect_kam", e.collect.kam},
                   {"collect_spectrum", e.collect.spectrum}};
  j["lla"] = {{"delta_min", cfg.lla.delta_min}, {"delta_max", cfg.lla.delta_max}, {"points", cfg.lla.points}};
  j["observables"] = {{"radius", cfg.operator_radius}};
  return j;
}

namespace detail {

inline void put_distribution(toml::table& t, std::string_view key, const Distribution& d) {
  if (d.kind() == Distribution::Kind::constant) {
    t.insert(key, d.lower());
  } else {
    t.insert(key, toml::array{d.lower(), d.upper()});
  }
}

}  // namespace detail

/// TOML form of the configuration; parse_config on it reproduces the run.
inline toml::table to_toml(const RunConfig& cfg) {
  const auto& e = cfg.ensemble;
  toml::table chain{{"K", e.geometry.left_end}, {"K_prime", e.geometry.right_end}};
  toml::table dis{{"gamma", e.distribution.gamma}};
  if (!cfg.gammas.empty()) {
    toml::array gs;
    for (double g : cfg.gammas) gs.push_back(g);
    dis.insert("gammas", gs);
  }
  detail::put_distribution(dis, "field", e.distribution.field);
  detail::put_distribution(dis, "transverse", e.distribution.transverse);
  detail::put_distribution(dis, "exchange", e.distribution.exchange);
  toml::table kam{{"epsilon_exponent", e.kam.epsilon_exponent},
                  {"growth", e.kam.growth},
                  {"tol_offdiag", e.kam.tol_offdiag},
                  {"k_max", e.kam.k_max},
                  {"merge_constant", e.kam.merge_constant}};
  if (e.kam.rho) kam.insert("rho", *e.kam.rho);
  toml::array distances;
  for (int d : e.correlation_distances) distances.push_back(d);
  toml::table ens{{"realizations", e.realizations},
                  {"seed", static_cast<std::int64_t>(e.seed)},
                  {"workers", e.workers},
                  {"weights", e.weights.kind == WeightsSpec::Kind::uniform ? "uniform" : "gibbs"},
                  {"beta", e.weights.beta},
                  {"magnetization_site", e.magnetization_site},
                  {"correlation_distances", distances},
                  {"collect_kam", e.collect.kam},
                  {"collect_spectrum", e.collect.spectrum}};
  toml::table lla{{"delta_min", cfg.lla.delta_min}, {"delta_max", cfg.lla.delta_max}, {"points", cfg.lla.points}};
  toml::table obs{{"radius", cfg.operator_radius}};
  return toml::table{{"chain", chain}, {"disorder", dis}, {"kam", kam},
                     {"ensemble", ens}, {"lla", lla}, {"observables", obs}};
}

}  // namespace mblkam
