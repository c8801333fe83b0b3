#pragma once

// Data model for phase mapping: prototype stick patterns, the shared
// scattering-vector grid, composition graphs and measured XRD datasets.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace phasemap {

inline constexpr std::size_t kMaxPeaks = 200;

struct Peak {
  double q = 0.0;          // scattering-vector magnitude, nm^-1
  double intensity = 0.0;  // relative, max 1 within a prototype
};

struct StickPattern {
  std::string phase_id;
  std::vector<Peak> peaks;  // strictly increasing q

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
};

// Uniformly spaced grid on the scattering-vector axis.
class QGrid {
 public:
  QGrid() = default;
  QGrid(double q_min, double q_max, std::size_t d);

  double q_min() const { return q_min_; }
  double q_max() const { return q_max_; }
  std::size_t size() const { return d_; }
  double step() const { return (q_max_ - q_min_) / static_cast<double>(d_ - 1); }
  double operator[](std::size_t i) const { return q_min_ + step() * static_cast<double>(i); }
  std::vector<double> values() const;
  bool contains(double q) const { return q >= q_min_ && q <= q_max_; }

  friend bool operator==(const QGrid&, const QGrid&) = default;

 private:
  double q_min_ = 0.0;
  double q_max_ = 1.0;
  std::size_t d_ = 2;
};

// Barycentric composition (c_A, c_B, c_C).
using Composition = std::array<double, 3>;

// Equilateral-triangle embedding used for triangulation and plotting:
// A at (0,0), B at (1,0), C at (1/2, sqrt(3)/2).
std::array<double, 2> ternary_to_cartesian(const Composition& c);

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;  // u < v
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class CompositionGraph {
 public:
  CompositionGraph() = default;
  // Validates inputs; edges are normalized (u < v), sorted and deduplicated.
  CompositionGraph(std::vector<Composition> points, std::vector<Edge> edges);

  // Delaunay triangulation of the embedded points; collinear inputs fall
  // back to a nearest-neighbor chain along the common line.
  static CompositionGraph triangulate(std::vector<Composition> points);

  std::size_t size() const { return points_.size(); }
  const std::vector<Composition>& points() const { return points_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_.at(i); }
  bool adjacent(std::size_t u, std::size_t v) const;
  bool is_connected() const;

  // Induced subgraph connectivity for a vertex subset.
  bool is_connected_subset(std::span<const std::size_t> vertices) const;

 private:
  std::vector<Composition> points_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

// Undirected edges of the Delaunay triangulation of 2-D points; empty when
// fewer than three non-collinear points exist.
std::vector<Edge> delaunay_edges(std::span<const std::array<double, 2>> points);

struct XrdDataset {
  QGrid grid;
  std::size_t n = 0;                // composition points
  std::vector<double> intensities;  // n x grid.size(), row-major, max-normalized rows
  CompositionGraph graph;

  std::span<const double> pattern(std::size_t i) const {
    return std::span<const double>(intensities).subspan(i * grid.size(), grid.size());
  }

  // Keeps the listed points (in order) and re-triangulates their compositions.
  XrdDataset subset(std::span<const std::size_t> indices) const;
};

class PrototypeLibrary {
 public:
  PrototypeLibrary() = default;
  explicit PrototypeLibrary(std::vector<StickPattern> prototypes);

  std::size_t size() const { return prototypes_.size(); }
  const StickPattern& operator[](std::size_t j) const { return prototypes_.at(j); }
  const std::vector<StickPattern>& prototypes() const { return prototypes_; }
  std::size_t max_peaks() const;
  // Index of a phase id; throws std::out_of_range when unknown.
  std::size_t index_of(const std::string& phase_id) const;

 private:
  std::vector<StickPattern> prototypes_;
};

// Scales a pattern so its maximum is 1 (no-op for an all-zero pattern).
void max_normalize(std::span<double> pattern);

// Prototype CSV: header "phase_id,q,intensity", one peak per row. Peaks
// outside the grid are dropped (one warning per phase), intensities are
// rescaled to max 1, and prototypes with more than max_peaks peaks keep the
// strongest ones.
PrototypeLibrary parse_prototypes(std::istream& in, const QGrid& grid, std::vector<std::string>* warnings = nullptr,
                                  std::size_t max_peaks = kMaxPeaks);
PrototypeLibrary load_prototypes(const std::filesystem::path& path, const QGrid& grid,
                                 std::vector<std::string>* warnings = nullptr, std::size_t max_peaks = kMaxPeaks);
std::string format_prototypes(const PrototypeLibrary& lib);

// Dataset CSV "c_a,c_b,c_c,i_0,...,i_{D-1}" plus a key=value metadata file
// (q_min, q_max, d) beside it with the same stem and a ".meta" extension.
std::filesystem::path metadata_path(const std::filesystem::path& dataset_csv);
QGrid parse_metadata(std::istream& in);
XrdDataset parse_dataset(std::istream& csv, const QGrid& grid);
XrdDataset load_dataset(const std::filesystem::path& path);
std::string format_dataset_csv(const XrdDataset& ds);
std::string format_metadata(const QGrid& grid);
void save_dataset(const XrdDataset& ds, const std::filesystem::path& path);

using Path = std::vector<std::size_t>;

inline constexpr std::size_t kDefaultPathLength = 10;

// Pool of simple paths drawn by randomized breadth-first search from
// uniformly sampled roots; each path ends at a random vertex of the deepest
// BFS layer reached within path_len - 1 hops.
std::vector<Path> build_path_pool(const CompositionGraph& graph, std::size_t pool_size,
                                  std::size_t path_len = kDefaultPathLength, std::uint64_t seed = 0);

}  // namespace phasemap
