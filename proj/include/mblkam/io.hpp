#pragma once

// Results files: atomic writes, CSV rows, JSON records.

#include <mblkam/config.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mblkam {

using Json = nlohmann::ordered_json;

/// Writes to path.tmp and renames over path.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Shortest round-trip decimal form.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string_view> header) {
    bool first = true;
    for (auto h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
    columns_ = header.size();
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    if (sizeof...(cells) != columns_) throw std::logic_error("CSV row has the wrong number of cells");
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  static std::string cell(double x) { return fmt(x); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class T>
    requires std::is_integral_v<T>
  static std::string cell(T x) { return std::to_string(x); }

  std::ostringstream out_;
  std::size_t columns_ = 0;
};

inline Json optional_json(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

inline Json to_json(const ResonantBlock& b) {
  return {{"core_first", b.core_sites.front()},
          {"core_last", b.core_sites.back()},
          {"fattened_first", b.fattened_first},
          {"fattened_last", b.fattened_last},
          {"scale", b.scale}};
}

inline Json to_json(const StepRecord& s) {
  Json blocks = Json::array();
  for (const auto& b : s.blocks) blocks.push_back(to_json(b));
  return {{"step", s.step},
          {"band", s.band},
          {"band_first", s.band_first},
          {"band_last", s.band_last},
          {"scale", s.scale},
          {"selected_pairs", s.selected_pairs},
          {"resonant_pairs", s.resonant_pairs},
          {"band_max_before", s.band_max_before},
          {"band_max_after", s.band_max_after},
          {"offdiag_max_after", s.offdiag_max_after},
          {"series_terms", s.series_terms},
          {"rotated_blocks", s.rotated_blocks},
          {"active", s.active},
          {"exact_fallback", s.exact_fallback},
          {"blocks", blocks}};
}

inline Json to_json(const RealizationRecord& r, double gamma) {
  Json blocks = Json::array();
  for (const auto& b : r.blocks) {
    blocks.push_back({{"core_first", b.core_first},
                      {"core_last", b.core_last},
                      {"fattened_first", b.fattened_first},
                      {"fattened_last", b.fattened_last}});
  }
  Json corr = Json::array();
  for (const auto& c : r.correlations) {
    corr.push_back({{"distance", c.distance}, {"site_i", c.site_i}, {"site_j", c.site_j}, {"max_abs", c.max_abs}});
  }
  return {{"index", r.index},
          {"seed", r.seed},
          {"gamma", gamma},
          {"ok", r.ok},
          {"error", r.error},
          {"norm_h", r.norm_h},
          {"resonant_sites", r.resonant_sites},
          {"min_gap", optional_json(r.min_gap)},
          {"kam_ran", r.kam_ran},
          {"converged", r.converged},
          {"fully_resonant", r.fully_resonant},
          {"steps", r.steps},
          {"final_offdiagonal", r.final_offdiagonal},
          {"orthogonality", r.orthogonality},
          {"eigen_error", optional_json(r.eigen_error)},
          {"blocks", blocks},
          {"magnetization", optional_json(r.magnetization)},
          {"correlations", corr}};
}

inline Json to_json(const MeanEstimate& m) {
  return {{"mean", m.mean}, {"stderr", m.stderr_}, {"count", m.count}};
}

inline Json to_json(const EnsembleSummary& s) {
  return {{"realizations", s.realizations},
          {"failures", s.failures},
          {"fully_resonant", s.fully_resonant},
          {"magnetization", to_json(s.magnetization)},
          {"resonant_sites", to_json(s.resonant_sites)},
          {"kam_steps", to_json(s.steps)},
          {"max_eigen_error_rel", s.max_eigen_error_rel},
          {"max_orthogonality", s.max_orthogonality}};
}

inline Json to_json(const DecayProfile& p) {
  Json rows = Json::array();
  for (const auto& r : p.rows) {
    rows.push_back({{"distance", r.distance},
                    {"count", r.count},
                    {"median", r.median},
                    {"q25", r.q25},
                    {"q75", r.q75},
                    {"satisfied", r.satisfied},
                    {"below_gamma_squared", r.below_gamma_squared}});
  }
  return {{"rows", rows},
          {"slope", p.slope},
          {"intercept", p.intercept},
          {"r_squared", p.r_squared},
          {"monotone", p.monotone}};
}

inline Json to_json(const LlaFit& f) {
  Json pts = Json::array();
  for (const auto& p : f.points) {
    pts.push_back({{"delta", p.delta},
                   {"probability", p.probability},
                   {"stderr", p.stderr_},
                   {"count", p.count},
                   {"fitted", p.fitted}});
  }
  return {{"sites", f.sites},
          {"refused", f.refused},
          {"reason", f.reason},
          {"nu", f.refused ? Json(nullptr) : Json(f.nu)},
          {"C_n", f.refused ? Json(nullptr) : Json(f.c_n)},
          {"intercept", f.refused ? Json(nullptr) : Json(f.intercept)},
          {"fit_points", f.fit_points},
          {"points", pts}};
}

inline Json to_json(const std::vector<ConnectivityPoint>& pts) {
  Json out = Json::array();
  for (const auto& p : pts) {
    out.push_back({{"site_i", p.site_i},
                   {"site_j", p.site_j},
                   {"distance", std::abs(p.site_j - p.site_i)},
                   {"probability", p.probability},
                   {"stderr", p.stderr_},
                   {"count", p.count}});
  }
  return out;
}

}  // namespace mblkam
