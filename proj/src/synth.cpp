#include "phasemap/synth.hpp"

#include "phasemap/textio.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace phasemap {

void SynthSpec::validate() const {
  if (phases == 0) throw std::invalid_argument("synth: need at least one phase");
  if (peaks_min == 0 || peaks_min > peaks_max) throw std::invalid_argument("synth: need 1 <= peaks_min <= peaks_max");
  if (peaks_max > kMaxPeaks) throw std::invalid_argument("synth: too many peaks per prototype");
  if (!(q_min > 0.0 && q_min < q_max) || d < 2) throw std::invalid_argument("synth: invalid grid");
  if (side < 2) throw std::invalid_argument("synth: lattice side must be >= 2");
  if (fields == 0) throw std::invalid_argument("synth: need at least one phase field");
  if (max_phases == 0 || max_phases > 3) throw std::invalid_argument("synth: max_phases must be 1, 2 or 3");
  if (!(alloy_gradient >= 0.0) || alloy_gradient > 2.0 * LatentBounds{}.s_max) {
    throw std::invalid_argument("synth: alloy gradient must lie in [0, 2 s_max]");
  }
  if (!(alloy_fraction >= 0.0 && alloy_fraction <= 1.0)) throw std::invalid_argument("synth: alloy_fraction must lie in [0, 1]");
  if (!(noise >= 0.0)) throw std::invalid_argument("synth: noise must be >= 0");
  if (!(sigma_low > 0.0 && sigma_low <= sigma_high)) throw std::invalid_argument("synth: invalid width range");
  if (!(min_activation > kActivationCutoff) || min_activation * static_cast<double>(max_phases) >= 1.0) {
    throw std::invalid_argument("synth: min_activation must exceed the cutoff and leave room for the rest");
  }
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw std::invalid_argument("synth: overlap must lie in [0, 1]");
  if (fields > side * (side + 1) / 2) throw std::invalid_argument("synth: more phase fields than lattice points");
  // Distinct phase sets of size 1..max_phases.
  double sets = 0.0, choose = 1.0;
  for (std::size_t r = 1; r <= std::min(max_phases, phases); ++r) {
    choose = choose * static_cast<double>(phases - r + 1) / static_cast<double>(r);
    sets += choose;
  }
  if (static_cast<double>(fields) > sets + 0.5) throw std::invalid_argument("synth: more fields than distinct phase sets");
}

std::vector<ActiveSet> GroundTruth::active_sets() const {
  std::vector<ActiveSet> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (activations[i * m + j] > 0.0) out[i].push_back(j);
    }
  }
  return out;
}

GroundTruth GroundTruth::subset(std::span<const std::size_t> indices) const {
  GroundTruth t;
  t.n = indices.size();
  t.m = m;
  t.field_alloyed = field_alloyed;
  for (std::size_t i : indices) {
    if (i >= n) throw std::out_of_range("ground truth subset: index out of range");
    auto copy_row = [&](const std::vector<double>& src, std::vector<double>& dst) {
      dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(i * m), src.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
    };
    copy_row(activations, t.activations);
    copy_row(alpha, t.alpha);
    copy_row(sigma, t.sigma);
    if (!field.empty()) t.field.push_back(field[i]);
  }
  return t;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

std::vector<StickPattern> make_prototypes(const SynthSpec& spec, Rng& rng) {
  const LatentBounds bounds;
  const double spacing = 3.0 * bounds.sigma_mid();
  const double margin = kRenderWindowSigmas * spec.sigma_high;
  const double lo = (spec.q_min + margin) / (1.0 - bounds.s_max);
  const double hi = (spec.q_max - margin) / (1.0 + bounds.s_max);
  if (!(hi - lo > spacing * static_cast<double>(spec.peaks_max))) {
    throw std::invalid_argument("synth: grid too narrow for the requested peaks");
  }
  std::vector<StickPattern> protos;
  std::vector<double> dominants;
  for (std::size_t p = 0; p < spec.phases; ++p) {
    bool done = false;
    for (int attempt = 0; attempt < 10000 && !done; ++attempt) {
      const std::size_t count = spec.peaks_min + uniform_index(rng, spec.peaks_max - spec.peaks_min + 1);
      std::vector<Peak> peaks;
      auto clear_of = [&](double q, std::span<const Peak> others) {
        return std::all_of(others.begin(), others.end(), [&](const Peak& o) { return std::abs(o.q - q) >= spacing; });
      };
      // The dominant peak stays away from every earlier prototype's peaks.
      double dominant = 0.0;
      bool ok = false;
      for (int t = 0; t < 1000 && !ok; ++t) {
        dominant = uniform(rng, lo, hi);
        ok = std::all_of(protos.begin(), protos.end(), [&](const StickPattern& s) { return clear_of(dominant, s.peaks); });
      }
      if (!ok) continue;
      peaks.push_back({dominant, 1.0});
      for (int t = 0; t < 1000 && peaks.size() < count; ++t) {
        Peak cand;
        if (!protos.empty() && uniform(rng, 0.0, 1.0) < spec.overlap) {
          const auto& src = protos[uniform_index(rng, protos.size())].peaks;
          cand = src[uniform_index(rng, src.size())];
          cand.intensity = std::min(cand.intensity, 0.9);
        } else {
          cand = {uniform(rng, lo, hi), uniform(rng, 0.15, 0.9)};
          if (!std::all_of(dominants.begin(), dominants.end(), [&](double q) { return std::abs(q - cand.q) >= spacing; })) {
            continue;
          }
        }
        if (clear_of(cand.q, peaks)) peaks.push_back(cand);
      }
      if (peaks.size() < count) continue;
      std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.q < b.q; });
      StickPattern s{"phase_" + std::to_string(p), std::move(peaks)};
      s.validate();
      protos.push_back(std::move(s));
      dominants.push_back(dominant);
      done = true;
    }
    if (!done) throw std::invalid_argument("synth: could not place well-separated prototypes; reduce phases or peaks");
  }
  return protos;
}

std::vector<ActiveSet> choose_sets(const SynthSpec& spec, Rng& rng) {
  const std::size_t m = spec.phases;
  const std::size_t f = spec.fields;
  if (m > f * spec.max_phases) throw std::invalid_argument("synth: too few fields to cover every phase");
  std::vector<ActiveSet> singles, multi;
  for (std::size_t a = 0; a < m; ++a) {
    singles.push_back({a});
    for (std::size_t b = a + 1; b < m; ++b) {
      if (spec.max_phases >= 2) multi.push_back({a, b});
      for (std::size_t c = b + 1; c < m && spec.max_phases >= 3; ++c) multi.push_back({a, b, c});
    }
  }
  if (singles.size() + multi.size() < f) throw std::invalid_argument("synth: more fields than distinct phase sets");
  std::vector<ActiveSet> chosen;
  if (f >= m) {
    chosen = singles;
    std::shuffle(multi.begin(), multi.end(), rng);
    chosen.insert(chosen.end(), multi.begin(), multi.begin() + static_cast<std::ptrdiff_t>(f - m));
  } else {
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    chosen.assign(f, {});
    for (std::size_t r = 0; r < m; ++r) chosen[r % f].push_back(order[r]);
    for (auto& s : chosen) std::sort(s.begin(), s.end());
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return chosen;
}

// Voronoi partition of the lattice around random seed points. Cells are
// convex, so fields stay connected when the map is subsampled; seeds are
// redrawn until every cell is connected on the lattice graph.
std::vector<std::size_t> voronoi_fields(std::span<const Composition> points, const CompositionGraph& graph,
                                        std::size_t fields, Rng& rng) {
  const std::size_t n = points.size();
  if (fields > n) throw std::invalid_argument("synth: more phase fields than lattice points");
  std::vector<std::array<double, 2>> xy;
  for (const auto& c : points) xy.push_back(ternary_to_cartesian(c));
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> owner(n);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t f = 0; f < fields; ++f) {
        const auto& c = xy[order[f]];
        const double d2 = (xy[i][0] - c[0]) * (xy[i][0] - c[0]) + (xy[i][1] - c[1]) * (xy[i][1] - c[1]);
        if (d2 < best) {
          best = d2;
          owner[i] = f;
        }
      }
    }
    std::vector<std::vector<std::size_t>> sets(fields);
    for (std::size_t i = 0; i < n; ++i) sets[owner[i]].push_back(i);
    bool connected = true;
    for (std::size_t f = 0; f < fields && connected; ++f) connected = graph.is_connected_subset(sets[f]);
    if (connected) return owner;
  }
  throw std::invalid_argument("synth: could not lay out connected phase fields; use fewer fields");
}

}  // namespace

Benchmark generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const QGrid grid = spec.grid();
  const std::size_t m = spec.phases;

  std::vector<Composition> points;
  const std::size_t s = spec.side - 1;
  for (std::size_t b = 0; b <= s; ++b) {
    for (std::size_t c = 0; b + c <= s; ++c) {
      const double cb = static_cast<double>(b) / static_cast<double>(s);
      const double cc = static_cast<double>(c) / static_cast<double>(s);
      // Integer remainder keeps the first coordinate exactly non-negative.
      const double ca = static_cast<double>(s - b - c) / static_cast<double>(s);
      points.push_back({ca, cb, cc});
    }
  }
  const std::size_t n = points.size();
  CompositionGraph graph = CompositionGraph::triangulate(points);

  PrototypeLibrary lib(make_prototypes(spec, rng));
  std::vector<double> widths(m);
  for (double& w : widths) w = uniform(rng, spec.sigma_low, spec.sigma_high);

  const auto sets = choose_sets(spec, rng);
  const auto owner = voronoi_fields(points, graph, spec.fields, rng);
  std::vector<std::vector<std::size_t>> members(spec.fields);
  for (std::size_t i = 0; i < n; ++i) members[owner[i]].push_back(i);

  GroundTruth truth;
  truth.n = n;
  truth.m = m;
  truth.activations.assign(n * m, 0.0);
  truth.alpha.assign(n * m, 1.0);
  truth.sigma.assign(n * m, 0.0);
  truth.field = owner;
  truth.field_alloyed.assign(spec.fields, false);

  std::vector<std::size_t> eligible;
  for (std::size_t f = 0; f < spec.fields; ++f) {
    if (sets[f].size() <= 2 && members[f].size() >= 2) eligible.push_back(f);
  }
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const auto alloy_count = static_cast<std::size_t>(std::llround(spec.alloy_fraction * static_cast<double>(eligible.size())));
  if (spec.alloy_gradient > 0.0) {
    for (std::size_t r = 0; r < alloy_count; ++r) truth.field_alloyed[eligible[r]] = true;
  }

  for (std::size_t f = 0; f < spec.fields; ++f) {
    const auto& pts = members[f];
    const auto& set = sets[f];
    std::vector<std::array<double, 2>> xy;
    std::array<double, 2> centroid{0.0, 0.0};
    for (std::size_t i : pts) {
      xy.push_back(ternary_to_cartesian(points[i]));
      centroid[0] += xy.back()[0] / static_cast<double>(pts.size());
      centroid[1] += xy.back()[1] / static_cast<double>(pts.size());
    }
    double radius = 0.0;
    for (const auto& p : xy) radius = std::max(radius, std::hypot(p[0] - centroid[0], p[1] - centroid[1]));
    const double length = std::max(radius, 0.5 / static_cast<double>(s));

    // Smooth activations: Gaussian weights around one anchor per phase,
    // lifted by a floor so every phase stays clearly present.
    std::vector<std::array<double, 2>> anchors;
    for (std::size_t r = 0; r < set.size(); ++r) anchors.push_back(xy[uniform_index(rng, xy.size())]);
    const double floor = spec.min_activation;
    const double spread = 1.0 - floor * static_cast<double>(set.size());
    for (std::size_t t = 0; t < pts.size(); ++t) {
      std::vector<double> w(set.size());
      double total = 0.0;
      for (std::size_t r = 0; r < set.size(); ++r) {
        const double dist = std::hypot(xy[t][0] - anchors[r][0], xy[t][1] - anchors[r][1]);
        w[r] = std::exp(-0.5 * dist * dist / (length * length));
        total += w[r];
      }
      for (std::size_t r = 0; r < set.size(); ++r) {
        truth.activations[pts[t] * m + set[r]] = floor + spread * w[r] / total;
        truth.sigma[pts[t] * m + set[r]] = widths[set[r]];
      }
    }
    for (std::size_t i : pts) {
      for (std::size_t j = 0; j < m; ++j) {
        if (truth.sigma[i * m + j] == 0.0) truth.sigma[i * m + j] = widths[j];
      }
    }

    if (truth.field_alloyed[f]) {
      const double angle = uniform(rng, 0.0, 2.0 * std::acos(-1.0));
      const double ux = std::cos(angle), uy = std::sin(angle);
      std::vector<double> proj;
      for (const auto& p : xy) proj.push_back(p[0] * ux + p[1] * uy);
      const double lo = *std::min_element(proj.begin(), proj.end());
      const double hi = *std::max_element(proj.begin(), proj.end());
      for (std::size_t t = 0; t < pts.size(); ++t) {
        const double u = hi > lo ? (proj[t] - lo) / (hi - lo) : 0.5;
        for (std::size_t j : set) truth.alpha[pts[t] * m + j] = 1.0 + spec.alloy_gradient * (u - 0.5);
      }
    }
  }

  const std::size_t d = grid.size();
  XrdDataset ds;
  ds.grid = grid;
  ds.n = n;
  ds.graph = graph;
  ds.intensities.resize(n * d);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> renders;
    std::vector<double> P(m);
    for (std::size_t j = 0; j < m; ++j) {
      P[j] = truth.activations[i * m + j];
      renders.push_back(render_phase(lib[j], truth.alpha[i * m + j], truth.sigma[i * m + j], {}, grid).values);
    }
    std::vector<double> x = mix(renders, P);
    for (double& v : x) {
      if (spec.noise > 0.0) v = std::max(0.0, v + spec.noise * gauss(rng));
    }
    max_normalize(x);
    std::copy(x.begin(), x.end(), ds.intensities.begin() + static_cast<std::ptrdiff_t>(i * d));
  }

  Benchmark bench{std::move(ds), std::move(lib), std::move(truth)};
  const RuleReport rules = rule_report(truth_solution(bench.truth, bench.library, bench.dataset), bench.dataset.graph);
  if (rules.gibbs_rate != 1.0 || rules.gibbs_alloy_rate != 1.0 || rules.connectivity_rate != 1.0) {
    throw std::logic_error("synth: generated ground truth violates a thermodynamic rule");
  }
  return bench;
}

Solution truth_solution(const GroundTruth& truth, const PrototypeLibrary& lib, const XrdDataset& ds) {
  if (truth.n != ds.n || truth.m != lib.size()) throw std::invalid_argument("truth_solution: truth does not match dataset/library");
  std::vector<std::string> ids;
  for (const auto& p : lib.prototypes()) ids.push_back(p.phase_id);
  return assemble_solution(std::move(ids), ds.grid, truth.n, truth.activations, truth.alpha, truth.sigma, ds.graph);
}

std::string format_truth(const GroundTruth& truth, const PrototypeLibrary& lib) {
  std::string out = "point_index,phase_id,activation,alpha\n";
  for (std::size_t i = 0; i < truth.n; ++i) {
    for (std::size_t j = 0; j < truth.m; ++j) {
      const double a = truth.activations[i * truth.m + j];
      if (a <= 0.0) continue;
      out += std::to_string(i) + ',' + lib[j].phase_id + ',' + io::format_double(a) + ',' +
             io::format_double(truth.alpha[i * truth.m + j]) + '\n';
    }
  }
  return out;
}

GroundTruth parse_truth(std::istream& in, const PrototypeLibrary& lib, std::size_t n) {
  GroundTruth t;
  t.n = n;
  t.m = lib.size();
  t.activations.assign(n * t.m, 0.0);
  t.alpha.assign(n * t.m, 1.0);
  t.sigma.assign(n * t.m, 0.0);
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != "point_index,phase_id,activation,alpha") {
    throw std::invalid_argument("truth CSV: expected header 'point_index,phase_id,activation,alpha'");
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (io::trim(line).empty()) continue;
    const auto cells = io::split(io::trim(line), ',');
    const std::string ctx = "truth CSV row " + std::to_string(row);
    if (cells.size() != 4) throw std::invalid_argument(ctx + ": expected 4 fields");
    const long long i = io::parse_int(cells[0], ctx);
    if (i < 0 || static_cast<std::size_t>(i) >= n) throw std::invalid_argument(ctx + ": point index out of range");
    std::size_t j = 0;
    try {
      j = lib.index_of(std::string(cells[1]));
    } catch (const std::out_of_range&) {
      throw std::invalid_argument(ctx + ": unknown phase '" + std::string(cells[1]) + "'");
    }
    const auto idx = static_cast<std::size_t>(i) * t.m + j;
    t.activations[idx] = io::parse_double(cells[2], ctx);
    t.alpha[idx] = io::parse_double(cells[3], ctx);
  }
  return t;
}

GroundTruth load_truth(const std::filesystem::path& path, const PrototypeLibrary& lib, std::size_t n) {
  std::istringstream in(io::read_file(path));
  return parse_truth(in, lib, n);
}

namespace {

// Min ||A w - x|| over w >= 0 for a handful of columns, by enumerating
// passive sets.
std::vector<double> tiny_nnls(const std::vector<std::span<const double>>& cols, std::span<const double> x) {
  const std::size_t k = cols.size();
  const std::size_t d = x.size();
  Eigen::MatrixXd G(k, k);
  Eigen::VectorXd b(k);
  for (std::size_t a = 0; a < k; ++a) {
    b[static_cast<Eigen::Index>(a)] = std::inner_product(cols[a].begin(), cols[a].end(), x.begin(), 0.0);
    for (std::size_t c = a; c < k; ++c) {
      const double g = std::inner_product(cols[a].begin(), cols[a].end(), cols[c].begin(), 0.0);
      G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = g;
      G(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(a)) = g;
    }
  }
  const double xx = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
  (void)d;
  std::vector<double> best(k, 0.0);
  double best_res = xx;
  for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
    std::vector<Eigen::Index> idx;
    for (std::size_t a = 0; a < k; ++a) {
      if (mask & (std::size_t{1} << a)) idx.push_back(static_cast<Eigen::Index>(a));
    }
    const auto s = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd Gs(s, s);
    Eigen::VectorXd bs(s);
    for (Eigen::Index r = 0; r < s; ++r) {
      bs[r] = b[idx[static_cast<std::size_t>(r)]];
      for (Eigen::Index c = 0; c < s; ++c) Gs(r, c) = G(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
    }
    const Eigen::VectorXd w = Gs.ldlt().solve(bs);
    if ((w.array() < 0.0).any() || !w.allFinite()) continue;
    const double res = xx - 2.0 * w.dot(bs) + w.dot(Gs * w);
    if (res < best_res) {
      best_res = res;
      std::fill(best.begin(), best.end(), 0.0);
      for (Eigen::Index r = 0; r < s; ++r) best[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])] = w[r];
    }
  }
  return best;
}

}  // namespace

DemixResult brute_force_demix(std::span<const double> x, const PrototypeLibrary& lib, const QGrid& grid,
                              const DemixOptions& options) {
  const std::size_t m = lib.size();
  if (m == 0) throw std::invalid_argument("brute_force_demix: empty library");
  if (m > 8) throw std::invalid_argument("brute_force_demix: exhaustive search is for desk-scale libraries (at most 8 prototypes)");
  if (x.size() != grid.size()) throw std::invalid_argument("brute_force_demix: pattern length does not match grid");
  if (options.k_max == 0 || options.alpha_steps == 0) throw std::invalid_argument("brute_force_demix: invalid options");
  const LatentBounds& bounds = options.bounds;
  std::vector<double> sigmas = options.sigmas.empty() ? std::vector<double>{bounds.sigma_mid()} : options.sigmas;
  std::vector<double> alphas;
  for (std::size_t a = 0; a < options.alpha_steps; ++a) {
    alphas.push_back(options.alpha_steps == 1 ? 1.0
                                              : 1.0 - bounds.s_max + 2.0 * bounds.s_max * static_cast<double>(a) /
                                                                         static_cast<double>(options.alpha_steps - 1));
  }
  // Candidate renders per phase; the candidate nearest (1, first sigma) is the start.
  struct Candidate {
    double alpha;
    std::vector<double> values;
  };
  std::vector<std::vector<Candidate>> cands(m);
  std::size_t start = 0;
  double start_dist = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    for (double s : sigmas) {
      for (double a : alphas) cands[j].push_back({a, render_phase(lib[j], a, s, {}, grid).values});
    }
  }
  for (std::size_t c = 0; c < cands[0].size(); ++c) {
    const double dist = std::abs(cands[0][c].alpha - 1.0) + (c / alphas.size() == 0 ? 0.0 : 1.0);
    if (dist < start_dist) {
      start_dist = dist;
      start = c;
    }
  }

  DemixResult best;
  best.loss = std::numeric_limits<double>::infinity();
  auto evaluate = [&](const ActiveSet& set, const std::vector<std::size_t>& choice, std::vector<double>& weights) {
    std::vector<std::span<const double>> cols;
    for (std::size_t r = 0; r < set.size(); ++r) cols.emplace_back(cands[set[r]][choice[r]].values);
    weights = tiny_nnls(cols, x);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) return std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> renders;
    for (auto c : cols) renders.emplace_back(c.begin(), c.end());
    for (double& w : weights) w /= total;
    return reconstruction_loss(mix(renders, weights), x).total;
  };

  for (std::size_t size = 1; size <= std::min(options.k_max, m); ++size) {
  for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
    ActiveSet set;
    for (std::size_t j = 0; j < m; ++j) {
      if (mask & (std::size_t{1} << j)) set.push_back(j);
    }
    if (set.size() != size) continue;
    std::vector<std::size_t> choice(set.size(), start);
    std::vector<double> weights;
    double loss = evaluate(set, choice, weights);
    for (std::size_t sweep = 0; sweep < options.sweeps; ++sweep) {
      bool moved = false;
      for (std::size_t r = 0; r < set.size(); ++r) {
        for (std::size_t c = 0; c < cands[set[r]].size(); ++c) {
          if (c == choice[r]) continue;
          auto trial = choice;
          trial[r] = c;
          std::vector<double> w;
          const double l = evaluate(set, trial, w);
          if (l < loss) {
            loss = l;
            choice = std::move(trial);
            weights = std::move(w);
            moved = true;
          }
        }
      }
      if (!moved) break;
    }
    if (!std::isfinite(loss)) continue;
    if (std::any_of(weights.begin(), weights.end(), [&](double w) { return w < options.cutoff; })) continue;
    // Strict improvement keeps the smaller subset on ties.
    if (loss < best.loss - 1e-12) {
      best.loss = loss;
      best.phases = set;
      best.activations.assign(m, 0.0);
      best.alpha.assign(m, 1.0);
      for (std::size_t r = 0; r < set.size(); ++r) {
        best.activations[set[r]] = weights[r];
        best.alpha[set[r]] = cands[set[r]][choice[r]].alpha;
      }
    }
  }
  }
  if (best.phases.empty()) throw std::runtime_error("brute_force_demix: no feasible subset");
  return best;
}

}  // namespace phasemap
