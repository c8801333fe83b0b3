#include "phasemap/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace phasemap {

ActiveSet Solution::active_set(std::size_t i) const {
  ActiveSet s;
  for (std::size_t j = 0; j < phases(); ++j) {
    if (activation(i, j) > 0.0) s.push_back(j);
  }
  return s;
}

std::vector<ActiveSet> Solution::active_sets() const {
  std::vector<ActiveSet> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = active_set(i);
  return out;
}

std::vector<std::size_t> Solution::active_phases() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < phases(); ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (activation(i, j) > 0.0) {
        out.push_back(j);
        break;
      }
    }
  }
  return out;
}

std::vector<double> apply_cutoff(std::span<const double> p, double cutoff, std::size_t max_active) {
  if (p.empty()) throw std::invalid_argument("apply_cutoff: empty distribution");
  if (max_active == 0) throw std::invalid_argument("apply_cutoff: max_active must be positive");
  for (double v : p) {
    if (!std::isfinite(v)) throw std::invalid_argument("apply_cutoff: non-finite activation");
  }
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::vector<double> out(p.size(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < order.size() && r < max_active; ++r) {
    const std::size_t j = order[r];
    if (p[j] < cutoff) break;
    out[j] = p[j];
    total += p[j];
  }
  if (total <= 0.0) {
    out[order.front()] = 1.0;
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

ActiveSet active_set_after_cutoff(std::span<const double> p, double cutoff, std::size_t max_active) {
  const auto kept = apply_cutoff(p, cutoff, max_active);
  ActiveSet s;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (kept[j] > 0.0) s.push_back(j);
  }
  return s;
}

std::vector<PhaseField> phase_fields(std::span<const ActiveSet> sets, const CompositionGraph& graph) {
  const std::size_t n = sets.size();
  if (graph.size() != n) throw std::invalid_argument("phase_fields: graph size does not match point count");
  std::vector<PhaseField> fields;
  std::vector<bool> seen(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    PhaseField f;
    f.phases = sets[s];
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      f.points.push_back(u);
      for (std::size_t v : graph.neighbors(u)) {
        if (!seen[v] && sets[v] == f.phases) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    std::sort(f.points.begin(), f.points.end());
    fields.push_back(std::move(f));
  }
  return fields;
}

Solution assemble_solution(std::vector<std::string> phase_ids, const QGrid& grid, std::size_t n,
                           std::span<const double> activations, std::vector<double> alpha, std::vector<double> sigma,
                           const CompositionGraph& graph, double cutoff) {
  const std::size_t m = phase_ids.size();
  if (activations.size() != n * m || alpha.size() != n * m || sigma.size() != n * m) {
    throw std::invalid_argument("assemble_solution: inconsistent table sizes");
  }
  Solution sol;
  sol.phase_ids = std::move(phase_ids);
  sol.grid = grid;
  sol.n = n;
  sol.activations.reserve(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = apply_cutoff(activations.subspan(i * m, m), cutoff);
    sol.activations.insert(sol.activations.end(), row.begin(), row.end());
  }
  sol.alpha = std::move(alpha);
  sol.sigma = std::move(sigma);
  sol.demixed.assign(m, {});
  const auto sets = sol.active_sets();
  sol.fields = phase_fields(sets, graph);
  return sol;
}

Solution postprocess(std::span<const LatentState> latents, const PrototypeLibrary& lib, const QGrid& grid,
                     const CompositionGraph& graph, double cutoff, std::span<const int> max_active) {
  const std::size_t n = latents.size();
  const std::size_t m = lib.size();
  if (!max_active.empty() && max_active.size() != n) throw std::invalid_argument("postprocess: max_active size mismatch");
  Solution sol;
  for (const auto& proto : lib.prototypes()) sol.phase_ids.push_back(proto.phase_id);
  sol.grid = grid;
  sol.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    const LatentState& s = latents[i];
    if (s.P.size() != m) throw std::invalid_argument("postprocess: latent phase count does not match library");
    const std::size_t cap = max_active.empty() ? m : static_cast<std::size_t>(std::max(1, max_active[i]));
    if (!max_active.empty()) sol.phase_cap.push_back(max_active[i]);
    const auto row = apply_cutoff(s.P, cutoff, cap);
    sol.activations.insert(sol.activations.end(), row.begin(), row.end());
    sol.alpha.insert(sol.alpha.end(), s.alpha.begin(), s.alpha.end());
    sol.sigma.insert(sol.sigma.end(), s.sigma.begin(), s.sigma.end());
  }
  // One render per phase at its activation-weighted mean latent parameters,
  // so alloying shifts across the map do not smear the pattern.
  sol.demixed.assign(m, {});
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t k = latents.empty() ? 0 : latents.front().k;
    double weight = 0.0, alpha = 0.0, sigma = 0.0;
    std::vector<double> amp(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = sol.activation(i, j);
      if (a <= 0.0) continue;
      weight += a;
      alpha += a * latents[i].alpha[j];
      sigma += a * latents[i].sigma[j];
      const auto row = latents[i].amp_row(j);
      for (std::size_t t = 0; t < k; ++t) amp[t] += a * row[t];
    }
    if (weight <= 0.0) continue;
    for (double& b : amp) b /= weight;
    sol.demixed[j] = render_phase(lib[j], alpha / weight, sigma / weight, amp, grid).values;
  }
  sol.fields = phase_fields(sol.active_sets(), graph);
  return sol;
}

namespace {

struct FitState {
  std::vector<double> theta;  // alpha, sigma, amp...
  double cost = 0.0;
};

double fit_cost(std::span<const double> target, const StickPattern& proto, const QGrid& grid, std::span<const double> theta) {
  const auto r = render_phase(proto, theta[0], theta[1], theta.subspan(2), grid);
  double c = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = r.values[i] - target[i];
    c += e * e;
  }
  return c;
}

void clamp_theta(std::vector<double>& theta, const LatentBounds& b) {
  theta[0] = std::clamp(theta[0], 1.0 - b.s_max, 1.0 + b.s_max);
  theta[1] = std::clamp(theta[1], b.sigma_min, b.sigma_max);
  for (std::size_t k = 2; k < theta.size(); ++k) theta[k] = std::clamp(theta[k], b.b_min, b.b_max);
}

FitState levenberg_marquardt(std::span<const double> target, const StickPattern& proto, const QGrid& grid,
                             const LatentBounds& bounds, std::vector<double> theta, std::size_t max_iterations) {
  const std::size_t d = grid.size();
  const std::size_t cols = theta.size();
  clamp_theta(theta, bounds);
  double cost = fit_cost(target, proto, grid, theta);
  double lambda = 1e-3;
  std::vector<double> jac;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    const auto r = render_phase_jacobian(proto, theta[0], theta[1], std::span<const double>(theta).subspan(2), grid, jac);
    if (!r.in_range) break;
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> J(
        jac.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(cols));
    Eigen::VectorXd res(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) res[static_cast<Eigen::Index>(i)] = r.values[i] - target[i];
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * res;
    bool improved = false;
    for (int attempt = 0; attempt < 12 && !improved; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      for (Eigen::Index c = 0; c < A.rows(); ++c) A(c, c) += lambda * (JtJ(c, c) + 1e-12);
      const Eigen::VectorXd delta = A.ldlt().solve(-Jtr);
      std::vector<double> trial = theta;
      for (std::size_t c = 0; c < cols; ++c) trial[c] += delta[static_cast<Eigen::Index>(c)];
      clamp_theta(trial, bounds);
      const double trial_cost = fit_cost(target, proto, grid, trial);
      if (trial_cost < cost) {
        const double gain = cost - trial_cost;
        theta = std::move(trial);
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (gain < 1e-14 * std::max(cost, 1e-30) + 1e-20) return {theta, cost};
      } else {
        lambda *= 4.0;
      }
    }
    if (!improved) break;
  }
  return {theta, cost};
}

}  // namespace

FitResult fit_prototype(std::span<const double> target_in, const StickPattern& proto, const QGrid& grid,
                        const LatentBounds& bounds, std::size_t max_iterations) {
  if (target_in.size() != grid.size()) throw std::invalid_argument("fit_prototype: pattern length does not match grid");
  std::vector<double> target(target_in.begin(), target_in.end());
  max_normalize(target);
  const std::size_t np = proto.peaks.size();
  std::vector<double> start(2 + np, 1.0);
  start[1] = bounds.sigma_mid();

  // Shifts beyond a peak width are out of reach of a local method, so a
  // coarse scan over alpha picks a second starting point.
  std::vector<double> scanned = start;
  double best_scan = fit_cost(target, proto, grid, start);
  const int steps = 80;
  for (int s = 0; s <= steps; ++s) {
    std::vector<double> trial = start;
    trial[0] = 1.0 - bounds.s_max + 2.0 * bounds.s_max * s / steps;
    const double c = fit_cost(target, proto, grid, trial);
    if (c < best_scan) {
      best_scan = c;
      scanned = trial;
    }
  }
  FitState best = levenberg_marquardt(target, proto, grid, bounds, start, max_iterations);
  if (scanned != start) {
    FitState alt = levenberg_marquardt(target, proto, grid, bounds, scanned, max_iterations);
    if (alt.cost < best.cost) best = std::move(alt);
  }
  FitResult out;
  out.alpha = best.theta[0];
  out.sigma = best.theta[1];
  out.amp.assign(best.theta.begin() + 2, best.theta.end());
  const auto r = render_phase(proto, out.alpha, out.sigma, out.amp, grid);
  out.js = r.in_range ? js_distance(r.values, target) : std::numeric_limits<double>::infinity();
  return out;
}

FidelityReport fidelity_loss(std::span<const std::vector<double>> demixed, const PrototypeLibrary& lib, const QGrid& grid,
                             const LatentBounds& bounds) {
  if (lib.size() == 0) throw std::invalid_argument("fidelity_loss: empty prototype library");
  FidelityReport rep;
  rep.per_phase.assign(demixed.size(), std::numeric_limits<double>::quiet_NaN());
  rep.best_prototype.assign(demixed.size(), 0);
  for (std::size_t p = 0; p < demixed.size(); ++p) {
    const auto& pattern = demixed[p];
    if (pattern.empty()) continue;
    if (pattern.size() != grid.size()) throw std::invalid_argument("fidelity_loss: pattern length does not match grid");
    double peak = 0.0;
    for (double v : pattern) {
      if (v < 0.0 || !std::isfinite(v)) throw std::invalid_argument("fidelity_loss: demixed pattern must be finite and non-negative");
      peak = std::max(peak, v);
    }
    if (peak <= 0.0) {
      rep.per_phase[p] = std::numeric_limits<double>::infinity();
      rep.sum = std::numeric_limits<double>::infinity();
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lib.size(); ++j) {
      const double js = fit_prototype(pattern, lib[j], grid, bounds).js;
      if (js < best) {
        best = js;
        rep.best_prototype[p] = j;
      }
    }
    rep.per_phase[p] = best;
    rep.sum += best;
  }
  return rep;
}

double activation_accuracy(std::span<const ActiveSet> predicted, std::span<const ActiveSet> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("activation_accuracy: point counts differ");
  if (truth.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

RuleReport rule_report(const Solution& sol, const CompositionGraph& graph, double alloy_threshold) {
  const std::size_t n = sol.n;
  if (graph.size() != n) throw std::invalid_argument("rule_report: graph size does not match solution");
  const std::size_t m = sol.phases();
  const auto sets = sol.active_sets();
  RuleReport r;
  r.gibbs_ok.assign(n, true);
  r.alloyed.assign(n, false);
  r.gibbs_alloy_ok.assign(n, true);
  r.connectivity_ok.assign(n, true);
  if (n == 0) return r;

  for (const Edge& e : graph.edges()) {
    if (sets[e.u] != sets[e.v]) continue;
    for (std::size_t j : sets[e.u]) {
      if (std::abs(sol.alpha[e.u * m + j] - sol.alpha[e.v * m + j]) > alloy_threshold) {
        r.alloyed[e.u] = r.alloyed[e.v] = true;
        break;
      }
    }
  }
  std::size_t gibbs = 0, alloy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r.gibbs_ok[i] = sets[i].size() <= 3;
    r.gibbs_alloy_ok[i] = !r.alloyed[i] || sets[i].size() <= 2;
    gibbs += r.gibbs_ok[i] ? 1 : 0;
    alloy += r.gibbs_alloy_ok[i] ? 1 : 0;
  }
  r.gibbs_rate = static_cast<double>(gibbs) / static_cast<double>(n);
  r.gibbs_alloy_rate = static_cast<double>(alloy) / static_cast<double>(n);

  std::map<ActiveSet, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[sets[i]].push_back(i);
  r.unique_sets = members.size();
  for (const auto& [set, points] : members) {
    const bool ok = graph.is_connected_subset(points);
    r.connected_sets += ok ? 1 : 0;
    if (!ok) {
      for (std::size_t i : points) r.connectivity_ok[i] = false;
    }
  }
  r.connectivity_rate = static_cast<double>(r.connected_sets) / static_cast<double>(r.unique_sets);
  return r;
}

}  // namespace phasemap
