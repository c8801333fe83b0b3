#pragma once

// Synthetic phase-diagram benchmarks with known answers, and an exhaustive
// demixer for tiny instances used as an independent oracle.

#include "phasemap/decoder.hpp"
#include "phasemap/domain.hpp"
#include "phasemap/eval.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace phasemap {

struct SynthSpec {
  std::size_t phases = 6;
  std::size_t peaks_min = 4;
  std::size_t peaks_max = 8;
  double q_min = 15.0;
  double q_max = 45.0;
  std::size_t d = 300;
  std::size_t side = 20;    // triangular lattice side; side*(side+1)/2 points
  std::size_t fields = 15;  // phase fields, each with a distinct phase set
  double alloy_gradient = 0.02;  // extreme alpha difference inside an alloyed field
  double alloy_fraction = 0.5;   // share of one- and two-phase fields that alloy
  double noise = 0.01;
  double sigma_low = 0.15;   // true peak widths are drawn per phase from [low, high]
  double sigma_high = 0.25;
  double min_activation = 0.1;  // activation floor inside a field
  // 0 gives well-separated prototypes; towards 1 prototypes reuse each
  // other's peaks and become hard to tell apart.
  double overlap = 0.0;
  std::size_t max_phases = 3;

  void validate() const;
  QGrid grid() const { return QGrid(q_min, q_max, d); }
};

struct GroundTruth {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> activations;  // n x m
  std::vector<double> alpha;        // n x m; 1 for inactive phases
  std::vector<double> sigma;        // n x m
  std::vector<std::size_t> field;   // field index per point
  std::vector<bool> field_alloyed;

  std::vector<ActiveSet> active_sets() const;
  GroundTruth subset(std::span<const std::size_t> indices) const;
};

struct Benchmark {
  XrdDataset dataset;
  PrototypeLibrary library;
  GroundTruth truth;
};

// Deterministic per seed. Throws std::invalid_argument for infeasible layouts
// and std::logic_error if the construction ever breaks a thermodynamic rule.
Benchmark generate(const SynthSpec& spec, std::uint64_t seed);

// Truth as a solution (no demixed patterns), for scoring with eval.
Solution truth_solution(const GroundTruth& truth, const PrototypeLibrary& lib, const XrdDataset& ds);

// Truth CSV "point_index,phase_id,activation,alpha": one row per active phase.
std::string format_truth(const GroundTruth& truth, const PrototypeLibrary& lib);
GroundTruth parse_truth(std::istream& in, const PrototypeLibrary& lib, std::size_t n);
GroundTruth load_truth(const std::filesystem::path& path, const PrototypeLibrary& lib, std::size_t n);

struct DemixOptions {
  std::size_t k_max = 3;
  std::size_t alpha_steps = 11;  // alpha candidates across [1 - s_max, 1 + s_max]
  std::vector<double> sigmas;    // width candidates; empty means {sigma_mid}
  std::size_t sweeps = 3;        // coordinate sweeps over per-phase candidates
  double cutoff = kActivationCutoff;
  LatentBounds bounds;
};

struct DemixResult {
  ActiveSet phases;
  std::vector<double> activations;  // length m, zero outside the set
  std::vector<double> alpha;        // length m
  double loss = 0.0;                // reconstruction loss of the best fit
};

// Exhaustive search over phase subsets of size <= k_max with per-phase
// (alpha, sigma) candidates and non-negative least squares activations.
// Subsets needing an activation below the cutoff are skipped, so the
// smaller subset wins. Requires at most 8 prototypes.
DemixResult brute_force_demix(std::span<const double> x, const PrototypeLibrary& lib, const QGrid& grid,
                              const DemixOptions& options = {});

}  // namespace phasemap
