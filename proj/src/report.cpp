#include "phasemap/report.hpp"

#include "phasemap/textio.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace phasemap {

namespace {

constexpr double kPanel = 360.0;
constexpr double kMargin = 30.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Five-stop blue-to-yellow ramp, t in [0, 1].
std::string ramp(double t) {
  static constexpr std::array<std::array<int, 3>, 5> stops = {
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), 3);
  const double f = t - static_cast<double>(i);
  char buf[16];
  std::array<int, 3> c{};
  for (std::size_t k = 0; k < 3; ++k) {
    c[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::array<double, 2> to_panel(const Composition& c, double x0) {
  const auto xy = ternary_to_cartesian(c);
  const double side = kPanel - 2.0 * kMargin;
  return {x0 + kMargin + xy[0] * side, kPanel - kMargin - xy[1] * side};
}

void triangle_outline(std::string& out, double x0) {
  const auto a = to_panel({1, 0, 0}, x0), b = to_panel({0, 1, 0}, x0), c = to_panel({0, 0, 1}, x0);
  out += "<polygon points=\"" + num(a[0]) + ',' + num(a[1]) + ' ' + num(b[0]) + ',' + num(b[1]) + ' ' + num(c[0]) + ',' +
         num(c[1]) + "\" fill=\"none\" stroke=\"#444\"/>\n";
}

std::pair<double, double> range_of(std::span<const double> v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(lo <= hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5e-3, hi + 0.5e-3};
  return {lo, hi};
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void check_points(const Solution& sol, std::span<const Composition> points) {
  if (points.size() != sol.n) throw std::invalid_argument("report: composition count does not match solution");
}

}  // namespace

std::string phase_svg(const Solution& sol, std::span<const Composition> points, std::size_t phase,
                      const PrototypeLibrary* lib) {
  check_points(sol, points);
  if (phase >= sol.phases()) throw std::out_of_range("phase_svg: phase index out of range");
  const std::size_t m = sol.phases();
  std::vector<double> alphas;
  for (std::size_t i = 0; i < sol.n; ++i) {
    if (sol.activation(i, phase) > 0.0) alphas.push_back(sol.alpha[i * m + phase]);
  }
  const auto [alo, ahi] = range_of(alphas);
  const std::string id = xml_escape(sol.phase_ids[phase]);

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(2 * kPanel) + "\" height=\"" + num(kPanel) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kMargin) + "\" y=\"18\">" + id + ": activation (size), shift ratio " + num(alo) + " to " + num(ahi) +
         " (colour)</text>\n";
  triangle_outline(out, 0.0);
  for (std::size_t i = 0; i < sol.n; ++i) {
    const auto p = to_panel(points[i], 0.0);
    const double a = sol.activation(i, phase);
    if (a <= 0.0) {
      out += "<circle cx=\"" + num(p[0]) + "\" cy=\"" + num(p[1]) + "\" r=\"1\" fill=\"#bbb\"/>\n";
      continue;
    }
    const double t = (sol.alpha[i * m + phase] - alo) / (ahi - alo);
    out += "<circle cx=\"" + num(p[0]) + "\" cy=\"" + num(p[1]) + "\" r=\"" + num(1.5 + 5.5 * std::sqrt(a)) + "\" fill=\"" +
           ramp(t) + "\"/>\n";
  }

  // Demixed pattern panel.
  const double x0 = kPanel + kMargin, x1 = 2 * kPanel - kMargin, y0 = kPanel - kMargin, y1 = kMargin + 10.0;
  out += "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" + num(y0 - y1) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
  out += "<text x=\"" + num(x0) + "\" y=\"" + num(kPanel - 8.0) + "\">q " + num(sol.grid.q_min()) + " to " + num(sol.grid.q_max()) +
         "</text>\n";
  const auto qx = [&](double q) { return x0 + (q - sol.grid.q_min()) / (sol.grid.q_max() - sol.grid.q_min()) * (x1 - x0); };
  const auto iy = [&](double v) { return y0 - std::clamp(v, 0.0, 1.0) * (y0 - y1); };
  if (lib != nullptr && phase < lib->size()) {
    for (const Peak& pk : (*lib)[phase].peaks) {
      out += "<line x1=\"" + num(qx(pk.q)) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(qx(pk.q)) + "\" y2=\"" + num(iy(pk.intensity)) +
             "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
    }
  }
  const auto& pattern = phase < sol.demixed.size() ? sol.demixed[phase] : std::vector<double>{};
  if (pattern.size() == sol.grid.size()) {
    out += "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (i > 0) out += ' ';
      out += num(qx(sol.grid[i])) + ',' + num(iy(pattern[i]));
    }
    out += "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string loss_heatmap_svg(const Solution& sol, std::span<const Composition> points) {
  check_points(sol, points);
  const std::vector<double> losses = sol.recon_loss.empty() ? std::vector<double>(sol.n, 0.0) : sol.recon_loss;
  const auto [lo, hi] = range_of(losses);
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kPanel) + "\" height=\"" + num(kPanel) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kMargin) + "\" y=\"18\">reconstruction loss " + num(lo) + " to " + num(hi) + "</text>\n";
  triangle_outline(out, 0.0);
  for (std::size_t i = 0; i < sol.n; ++i) {
    const auto p = to_panel(points[i], 0.0);
    out += "<circle cx=\"" + num(p[0]) + "\" cy=\"" + num(p[1]) + "\" r=\"5\" fill=\"" + ramp((losses[i] - lo) / (hi - lo)) + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

ReportOutput write_report(const Solution& sol, std::span<const Composition> points, const PrototypeLibrary* lib,
                          const std::filesystem::path& out_dir) {
  check_points(sol, points);
  std::filesystem::create_directories(out_dir);
  ReportOutput rep;
  const auto active = sol.active_phases();
  if (active.empty()) rep.warnings.push_back("solution has no active phases; no per-phase figures written");
  for (std::size_t j : active) {
    std::string stem = sol.phase_ids[j];
    for (char& ch : stem) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
    }
    const auto path = out_dir / ("phase_" + stem + ".svg");
    io::write_atomic(path, phase_svg(sol, points, j, lib));
    rep.files.push_back(path);
  }
  if (sol.recon_loss.empty()) rep.warnings.push_back("solution carries no reconstruction losses; heatmap is flat");
  const auto heat = out_dir / "loss_heatmap.svg";
  io::write_atomic(heat, loss_heatmap_svg(sol, points));
  rep.files.push_back(heat);
  return rep;
}

}  // namespace phasemap
