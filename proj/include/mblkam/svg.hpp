#pragma once

// Minimal deterministic SVG line plots.

#include <mblkam/io.hpp>

#include <string>
#include <vector>

namespace mblkam::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional, same length as y
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

namespace detail {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

inline std::string tick(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline const char* color(std::size_t k) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return kColors[k % 6];
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return t;
  }
};

inline Axis make_axis(const std::vector<double>& values, bool log) {
  Axis a;
  a.log = log;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    const double t = log ? std::log10(v) : v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  a.lo = lo - pad;
  a.hi = hi + pad;
  return a;
}

}  // namespace detail

inline std::string render(const Plot& plot) {
  constexpr double W = 640, H = 420, L = 80, R = 20, T = 40, B = 60;
  std::vector<double> xs, ys;
  for (const auto& s : plot.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      ys.push_back(s.y[k]);
      if (!s.err.empty()) {
        ys.push_back(s.y[k] + s.err[k]);
        if (!plot.log_y || s.y[k] - s.err[k] > 0.0) ys.push_back(s.y[k] - s.err[k]);
      }
    }
  }
  const auto ax = detail::make_axis(xs, plot.log_x);
  const auto ay = detail::make_axis(ys, plot.log_y);
  auto px = [&](double v) { return L + ax.map(v) * (W - L - R); };
  auto py = [&](double v) { return H - B - ay.map(v) * (H - T - B); };
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!plot.log_x || x > 0.0) && (!plot.log_y || y > 0.0);
  };
  using detail::num;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::escape(plot.title) << "</text>\n";
  o << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(W - L - R) << "\" height=\""
    << num(H - T - B) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double tx = ax.lo + (ax.hi - ax.lo) * k / 4.0;
    const double ty = ay.lo + (ay.hi - ay.lo) * k / 4.0;
    const double vx = plot.log_x ? std::pow(10.0, tx) : tx;
    const double vy = plot.log_y ? std::pow(10.0, ty) : ty;
    const double gx = L + (W - L - R) * k / 4.0;
    const double gy = H - B - (H - T - B) * k / 4.0;
    o << "<text x=\"" << num(gx) << "\" y=\"" << num(H - B + 16) << "\" text-anchor=\"middle\">"
      << detail::tick(vx) << "</text>\n";
    o << "<text x=\"" << num(L - 6) << "\" y=\"" << num(gy + 4) << "\" text-anchor=\"end\">" << detail::tick(vy)
      << "</text>\n";
  }
  o << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"" << num(H - 16) << "\" text-anchor=\"middle\">"
    << detail::escape(plot.xlabel) << "</text>\n";
  o << "<text transform=\"translate(18," << num((T + H - B) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << detail::escape(plot.ylabel) << "</text>\n";

  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const char* c = detail::color(si);
    std::string path;
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!ok(s.x[k], s.y[k])) continue;
      path += (path.empty() ? "M" : " L") + num(px(s.x[k])) + "," + num(py(s.y[k]));
    }
    if (!path.empty()) o << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << c << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!ok(s.x[k], s.y[k])) continue;
      o << "<circle cx=\"" << num(px(s.x[k])) << "\" cy=\"" << num(py(s.y[k])) << "\" r=\"3\" fill=\"" << c
        << "\"/>\n";
      if (!s.err.empty() && s.err[k] > 0.0) {
        const double lo = plot.log_y ? std::max(s.y[k] - s.err[k], s.y[k] * 1e-3) : s.y[k] - s.err[k];
        o << "<line x1=\"" << num(px(s.x[k])) << "\" x2=\"" << num(px(s.x[k])) << "\" y1=\"" << num(py(lo))
          << "\" y2=\"" << num(py(s.y[k] + s.err[k])) << "\" stroke=\"" << c << "\"/>\n";
      }
    }
    o << "<text x=\"" << num(W - R - 8) << "\" y=\"" << num(T + 16 + 14 * si) << "\" text-anchor=\"end\" fill=\"" << c
      << "\">" << detail::escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace mblkam::svg
