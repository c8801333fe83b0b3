#include "phasemap/domain.hpp"

#include "phasemap/textio.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace phasemap {

void StickPattern::validate() const {
  if (peaks.empty() || peaks.size() > kMaxPeaks) {
    throw std::invalid_argument("prototype '" + phase_id + "': peak count " + std::to_string(peaks.size()) +
                                " outside [1, " + std::to_string(kMaxPeaks) + "]");
  }
  double max_a = 0.0;
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    if (!(peaks[k].q > 0.0) || !(peaks[k].intensity > 0.0)) {
      throw std::invalid_argument("prototype '" + phase_id + "': peaks need positive q and intensity");
    }
    if (k > 0 && !(peaks[k].q > peaks[k - 1].q)) {
      throw std::invalid_argument("prototype '" + phase_id + "': peak positions must be strictly increasing");
    }
    max_a = std::max(max_a, peaks[k].intensity);
  }
  if (std::abs(max_a - 1.0) > 1e-12) {
    throw std::invalid_argument("prototype '" + phase_id + "': intensities must be normalized to max 1");
  }
}

QGrid::QGrid(double q_min, double q_max, std::size_t d) : q_min_(q_min), q_max_(q_max), d_(d) {
  if (d < 2) throw std::invalid_argument("q grid: need at least 2 samples");
  if (!(q_max > q_min) || !std::isfinite(q_min) || !std::isfinite(q_max)) {
    throw std::invalid_argument("q grid: need finite q_min < q_max");
  }
}

std::vector<double> QGrid::values() const {
  std::vector<double> v(d_);
  for (std::size_t i = 0; i < d_; ++i) v[i] = (*this)[i];
  return v;
}

std::array<double, 2> ternary_to_cartesian(const Composition& c) {
  return {c[1] + 0.5 * c[2], 0.5 * std::sqrt(3.0) * c[2]};
}

// ---------------------------------------------------------------- graph

CompositionGraph::CompositionGraph(std::vector<Composition> points, std::vector<Edge> edges)
    : points_(std::move(points)), adjacency_(points_.size()) {
  for (const Composition& c : points_) {
    const double total = c[0] + c[1] + c[2];
    if (std::abs(total - 1.0) >= 1e-9 || c[0] < 0 || c[1] < 0 || c[2] < 0) {
      throw std::invalid_argument("composition graph: composition does not lie on the simplex");
    }
  }
  for (Edge e : edges) {
    if (e.u == e.v) throw std::invalid_argument("composition graph: self-loop at " + std::to_string(e.u));
    if (e.u >= points_.size() || e.v >= points_.size()) throw std::invalid_argument("composition graph: edge endpoint out of range");
    if (e.u > e.v) std::swap(e.u, e.v);
    edges_.push_back(e);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const Edge& e : edges_) {
    adjacency_[e.u].push_back(e.v);
    adjacency_[e.v].push_back(e.u);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

CompositionGraph CompositionGraph::triangulate(std::vector<Composition> points) {
  std::vector<std::array<double, 2>> xy;
  xy.reserve(points.size());
  for (const Composition& c : points) xy.push_back(ternary_to_cartesian(c));
  {
    auto sorted = xy;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("composition graph: duplicate composition points");
    }
  }
  std::vector<Edge> edges = delaunay_edges(xy);
  if (edges.empty() && points.size() >= 2) {
    // Collinear (or two-point) input: chain neighbors along the principal line.
    const auto& p0 = xy.front();
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < xy.size(); ++i) {
      const double d = std::hypot(xy[i][0] - p0[0], xy[i][1] - p0[1]);
      if (d > best) best = d, far = i;
    }
    const double dx = xy[far][0] - p0[0];
    const double dy = xy[far][1] - p0[1];
    std::vector<std::size_t> order(xy.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return (xy[a][0] - p0[0]) * dx + (xy[a][1] - p0[1]) * dy < (xy[b][0] - p0[0]) * dx + (xy[b][1] - p0[1]) * dy;
    });
    for (std::size_t i = 1; i < order.size(); ++i) edges.push_back({order[i - 1], order[i]});
  }
  return CompositionGraph(std::move(points), std::move(edges));
}

bool CompositionGraph::adjacent(std::size_t u, std::size_t v) const {
  const auto& nb = adjacency_.at(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

bool CompositionGraph::is_connected() const {
  std::vector<std::size_t> all(points_.size());
  std::iota(all.begin(), all.end(), 0);
  return is_connected_subset(all);
}

bool CompositionGraph::is_connected_subset(std::span<const std::size_t> vertices) const {
  if (vertices.empty()) return true;
  std::vector<char> member(points_.size(), 0);
  for (std::size_t v : vertices) member.at(v) = 1;
  std::vector<char> seen(points_.size(), 0);
  std::deque<std::size_t> queue{vertices.front()};
  seen[vertices.front()] = 1;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t w : adjacency_[u]) {
      if (member[w] && !seen[w]) {
        seen[w] = 1;
        ++reached;
        queue.push_back(w);
      }
    }
  }
  std::size_t unique = 0;
  for (char m : member) unique += m;
  return reached == unique;
}

// ---------------------------------------------------------------- dataset

XrdDataset XrdDataset::subset(std::span<const std::size_t> indices) const {
  XrdDataset out;
  out.grid = grid;
  out.n = indices.size();
  std::vector<Composition> comps;
  for (std::size_t i : indices) {
    const auto p = pattern(i);
    out.intensities.insert(out.intensities.end(), p.begin(), p.end());
    comps.push_back(graph.points().at(i));
  }
  out.graph = CompositionGraph::triangulate(std::move(comps));
  return out;
}

PrototypeLibrary::PrototypeLibrary(std::vector<StickPattern> prototypes) : prototypes_(std::move(prototypes)) {
  if (prototypes_.empty()) throw std::invalid_argument("prototype library: at least one prototype required");
  std::set<std::string> ids;
  for (const auto& p : prototypes_) {
    p.validate();
    if (!ids.insert(p.phase_id).second) throw std::invalid_argument("prototype library: duplicate phase id '" + p.phase_id + "'");
  }
}

std::size_t PrototypeLibrary::max_peaks() const {
  std::size_t k = 0;
  for (const auto& p : prototypes_) k = std::max(k, p.peaks.size());
  return k;
}

std::size_t PrototypeLibrary::index_of(const std::string& phase_id) const {
  for (std::size_t j = 0; j < prototypes_.size(); ++j) {
    if (prototypes_[j].phase_id == phase_id) return j;
  }
  throw std::out_of_range("prototype library: unknown phase id '" + phase_id + "'");
}

void max_normalize(std::span<double> pattern) {
  double peak = 0.0;
  for (double v : pattern) peak = std::max(peak, v);
  if (peak <= 0.0) return;
  for (double& v : pattern) v /= peak;
}

// ---------------------------------------------------------------- prototype CSV

PrototypeLibrary parse_prototypes(std::istream& in, const QGrid& grid, std::vector<std::string>* warnings,
                                  std::size_t max_peaks) {
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != "phase_id,q,intensity") {
    throw std::invalid_argument("prototype csv: expected header 'phase_id,q,intensity'");
  }
  // Preserve first-appearance order of phase ids; rows of one phase must be contiguous.
  std::vector<std::string> order;
  std::map<std::string, std::vector<Peak>> peaks;
  std::map<std::string, std::size_t> dropped;
  std::size_t row = 1;
  std::string previous;
  while (std::getline(in, line)) {
    ++row;
    if (io::trim(line).empty()) continue;
    const auto fields = io::split(io::trim(line), ',');
    const std::string ctx = "prototype csv row " + std::to_string(row);
    if (fields.size() != 3) throw std::invalid_argument(ctx + ": expected 3 fields");
    std::string id(io::trim(fields[0]));
    if (id.empty()) throw std::invalid_argument(ctx + ": empty phase_id");
    const double q = io::parse_double(fields[1], ctx);
    const double a = io::parse_double(fields[2], ctx);
    if (!std::isfinite(q) || !std::isfinite(a) || a <= 0.0 || q <= 0.0) {
      throw std::invalid_argument(ctx + ": q and intensity must be finite and positive");
    }
    if (id != previous) {
      if (peaks.contains(id)) throw std::invalid_argument(ctx + ": duplicate phase id '" + id + "'");
      order.push_back(id);
      peaks[id];
      previous = id;
    }
    if (!grid.contains(q)) {
      ++dropped[id];
      continue;
    }
    peaks[id].push_back({q, a});
  }
  std::vector<StickPattern> out;
  for (const std::string& id : order) {
    std::vector<Peak> p = std::move(peaks[id]);
    if (dropped[id] > 0 && warnings) {
      warnings->push_back("prototype '" + id + "': dropped " + std::to_string(dropped[id]) + " peak(s) outside [" +
                          io::format_double(grid.q_min()) + ", " + io::format_double(grid.q_max()) + "]");
    }
    if (p.empty()) throw std::invalid_argument("prototype '" + id + "': no peaks inside the grid range");
    if (p.size() > max_peaks) {
      std::stable_sort(p.begin(), p.end(), [](const Peak& a, const Peak& b) { return a.intensity > b.intensity; });
      p.resize(max_peaks);
      if (warnings) warnings->push_back("prototype '" + id + "': truncated to " + std::to_string(max_peaks) + " strongest peaks");
    }
    std::sort(p.begin(), p.end(), [](const Peak& a, const Peak& b) { return a.q < b.q; });
    for (std::size_t k = 1; k < p.size(); ++k) {
      if (!(p[k].q > p[k - 1].q)) throw std::invalid_argument("prototype '" + id + "': repeated peak position");
    }
    double top = 0.0;
    for (const Peak& pk : p) top = std::max(top, pk.intensity);
    for (Peak& pk : p) pk.intensity /= top;
    out.push_back({id, std::move(p)});
  }
  return PrototypeLibrary(std::move(out));
}

PrototypeLibrary load_prototypes(const std::filesystem::path& path, const QGrid& grid, std::vector<std::string>* warnings,
                                 std::size_t max_peaks) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prototype file " + path.string());
  return parse_prototypes(in, grid, warnings, max_peaks);
}

std::string format_prototypes(const PrototypeLibrary& lib) {
  std::string out = "phase_id,q,intensity\n";
  for (const auto& p : lib.prototypes()) {
    for (const Peak& pk : p.peaks) {
      out += p.phase_id + "," + io::format_double(pk.q) + "," + io::format_double(pk.intensity) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------- dataset CSV

std::filesystem::path metadata_path(const std::filesystem::path& dataset_csv) {
  std::filesystem::path p = dataset_csv;
  p.replace_extension(".meta");
  return p;
}

QGrid parse_metadata(std::istream& in) {
  std::map<std::string, std::string, std::less<>> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = io::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("metadata: expected key=value, got '" + std::string(t) + "'");
    kv[std::string(io::trim(t.substr(0, eq)))] = std::string(io::trim(t.substr(eq + 1)));
  }
  for (const char* key : {"q_min", "q_max", "d"}) {
    if (!kv.contains(key)) throw std::invalid_argument(std::string("metadata: missing key '") + key + "'");
  }
  const long long d = io::parse_int(kv["d"], "metadata d");
  if (d < 2) throw std::invalid_argument("metadata: d must be >= 2");
  return QGrid(io::parse_double(kv["q_min"], "metadata q_min"), io::parse_double(kv["q_max"], "metadata q_max"),
               static_cast<std::size_t>(d));
}

XrdDataset parse_dataset(std::istream& csv, const QGrid& grid) {
  const std::size_t d = grid.size();
  std::string line;
  if (!std::getline(csv, line)) throw std::invalid_argument("dataset csv: empty file");
  const auto header = io::split(io::trim(line), ',');
  if (header.size() != d + 3 || header[0] != "c_a" || header[1] != "c_b" || header[2] != "c_c") {
    throw std::invalid_argument("dataset csv: header must be c_a,c_b,c_c followed by " + std::to_string(d) +
                                " intensity columns");
  }
  XrdDataset ds;
  ds.grid = grid;
  std::vector<Composition> comps;
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (io::trim(line).empty()) continue;
    const auto fields = io::split(io::trim(line), ',');
    const std::string ctx = "dataset csv data row " + std::to_string(row);
    if (fields.size() != d + 3) throw std::invalid_argument(ctx + ": expected " + std::to_string(d + 3) + " fields");
    Composition c{};
    for (int k = 0; k < 3; ++k) c[k] = io::parse_double(fields[k], ctx);
    if (std::abs(c[0] + c[1] + c[2] - 1.0) > 1e-6 || c[0] < 0 || c[1] < 0 || c[2] < 0) {
      throw std::invalid_argument(ctx + ": composition does not sum to 1 within 1e-6");
    }
    // Snap onto the simplex so graph invariants hold exactly.
    c[2] = 1.0 - c[0] - c[1];
    if (c[2] < 0.0) c[2] = 0.0;
    comps.push_back(c);
    const std::size_t start = ds.intensities.size();
    for (std::size_t i = 0; i < d; ++i) {
      const double v = io::parse_double(fields[i + 3], ctx);
      if (!std::isfinite(v)) throw std::invalid_argument(ctx + ": non-finite intensity at column i_" + std::to_string(i));
      if (v < 0.0) throw std::invalid_argument(ctx + ": negative intensity at column i_" + std::to_string(i));
      ds.intensities.push_back(v);
    }
    max_normalize(std::span<double>(ds.intensities).subspan(start, d));
    ++row;
  }
  if (row == 0) throw std::invalid_argument("dataset csv: no data rows");
  ds.n = row;
  ds.graph = CompositionGraph::triangulate(std::move(comps));
  return ds;
}

XrdDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream meta(metadata_path(path));
  if (!meta) throw std::runtime_error("cannot open dataset metadata " + metadata_path(path).string());
  const QGrid grid = parse_metadata(meta);
  std::ifstream csv(path);
  if (!csv) throw std::runtime_error("cannot open dataset " + path.string());
  return parse_dataset(csv, grid);
}

std::string format_dataset_csv(const XrdDataset& ds) {
  std::string out = "c_a,c_b,c_c";
  for (std::size_t i = 0; i < ds.grid.size(); ++i) out += ",i_" + std::to_string(i);
  out += '\n';
  for (std::size_t p = 0; p < ds.n; ++p) {
    const Composition& c = ds.graph.points()[p];
    out += io::format_double(c[0]) + "," + io::format_double(c[1]) + "," + io::format_double(c[2]);
    for (double v : ds.pattern(p)) {
      out += ',';
      out += io::format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string format_metadata(const QGrid& grid) {
  return "q_min=" + io::format_double(grid.q_min()) + "\nq_max=" + io::format_double(grid.q_max()) +
         "\nd=" + std::to_string(grid.size()) + "\n";
}

void save_dataset(const XrdDataset& ds, const std::filesystem::path& path) {
  io::write_atomic(path, format_dataset_csv(ds));
  io::write_atomic(metadata_path(path), format_metadata(ds.grid));
}

// ---------------------------------------------------------------- path pool

std::vector<Path> build_path_pool(const CompositionGraph& graph, std::size_t pool_size, std::size_t path_len,
                                  std::uint64_t seed) {
  if (path_len < 2) throw std::invalid_argument("path pool: path_len must be >= 2");
  if (graph.size() == 0) throw std::invalid_argument("path pool: empty graph");
  if (!graph.is_connected()) throw std::invalid_argument("path pool: composition graph is disconnected");
  std::mt19937_64 rng(seed);
  std::vector<Path> pool;
  pool.reserve(pool_size);
  const std::size_t n = graph.size();
  std::vector<std::size_t> parent(n);
  std::vector<std::size_t> depth(n);
  std::vector<std::size_t> stamp(n, 0);
  std::vector<std::size_t> frontier;
  std::vector<std::size_t> next;
  std::vector<std::size_t> shuffled;
  for (std::size_t p = 0; p < pool_size; ++p) {
    const std::size_t tag = p + 1;
    const std::size_t root = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    stamp[root] = tag;
    parent[root] = root;
    depth[root] = 0;
    frontier.assign(1, root);
    std::vector<std::size_t> deepest{root};
    for (std::size_t level = 1; level < path_len && !frontier.empty(); ++level) {
      next.clear();
      for (std::size_t u : frontier) {
        shuffled = graph.neighbors(u);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (std::size_t w : shuffled) {
          if (stamp[w] == tag) continue;
          stamp[w] = tag;
          parent[w] = u;
          depth[w] = level;
          next.push_back(w);
        }
      }
      if (!next.empty()) deepest = next;
      frontier.swap(next);
    }
    std::size_t v = deepest[std::uniform_int_distribution<std::size_t>(0, deepest.size() - 1)(rng)];
    Path path;
    while (true) {
      path.push_back(v);
      if (v == root) break;
      v = parent[v];
    }
    std::reverse(path.begin(), path.end());
    pool.push_back(std::move(path));
  }
  return pool;
}

}  // namespace phasemap
