#pragma once

// Post-processing of trained latents into a phase-map solution, plus the
// metric suite: fidelity of demixed phases, activation accuracy and
// thermodynamic-rule satisfaction rates.

#include "phasemap/decoder.hpp"
#include "phasemap/domain.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phasemap {

inline constexpr double kActivationCutoff = 0.01;

using ActiveSet = std::vector<std::size_t>;  // sorted phase indices

struct PhaseField {
  ActiveSet phases;
  std::vector<std::size_t> points;  // sorted
};

struct Solution {
  std::vector<std::string> phase_ids;
  QGrid grid;
  std::size_t n = 0;
  std::vector<double> activations;  // n x m, post-cutoff, rows sum to 1
  std::vector<double> alpha;        // n x m
  std::vector<double> sigma;        // n x m
  std::vector<double> recon_loss;   // per point; empty when unknown
  std::vector<int> phase_cap;       // per point max phase count used in training (2 = alloyed); empty when unknown
  std::vector<std::vector<double>> demixed;  // per phase; empty when never active
  std::vector<PhaseField> fields;

  std::size_t phases() const { return phase_ids.size(); }
  double activation(std::size_t i, std::size_t j) const { return activations[i * phases() + j]; }
  ActiveSet active_set(std::size_t i) const;
  std::vector<ActiveSet> active_sets() const;
  // Phases active at one or more points.
  std::vector<std::size_t> active_phases() const;
};

// Zeroes entries below the cutoff and renormalizes. When every entry is
// below the cutoff the argmax alone is kept. With max_active set, only the
// largest max_active entries survive (ties broken by lower index).
std::vector<double> apply_cutoff(std::span<const double> p, double cutoff = kActivationCutoff,
                                 std::size_t max_active = std::numeric_limits<std::size_t>::max());

// Indices that survive apply_cutoff.
ActiveSet active_set_after_cutoff(std::span<const double> p, double cutoff = kActivationCutoff,
                                  std::size_t max_active = std::numeric_limits<std::size_t>::max());

// Connected components of the graph restricted to points sharing an active set.
std::vector<PhaseField> phase_fields(std::span<const ActiveSet> sets, const CompositionGraph& graph);

// Builds a solution from raw per-point quantities (activations are cut off
// and renormalized here; demixed patterns are left empty).
Solution assemble_solution(std::vector<std::string> phase_ids, const QGrid& grid, std::size_t n,
                           std::span<const double> activations, std::vector<double> alpha, std::vector<double> sigma,
                           const CompositionGraph& graph, double cutoff = kActivationCutoff);

// Full post-processing of trained latents. max_active, when given, caps the
// active count per point (3 under the Gibbs rule, 2 at alloyed points).
Solution postprocess(std::span<const LatentState> latents, const PrototypeLibrary& lib, const QGrid& grid,
                     const CompositionGraph& graph, double cutoff = kActivationCutoff,
                     std::span<const int> max_active = {});

struct FidelityReport {
  std::vector<double> per_phase;          // JS distance; +inf for a zero pattern; NaN for phases with no pattern
  std::vector<std::size_t> best_prototype;
  double sum = 0.0;                       // over phases with a pattern
};

struct FitResult {
  double alpha = 1.0;
  double sigma = 0.0;
  std::vector<double> amp;
  double js = 0.0;
};

// Bounded Levenberg-Marquardt fit of a prototype render (alpha, sigma,
// per-peak amplitudes) to a target pattern, started at (1, sigma_mid, 1).
FitResult fit_prototype(std::span<const double> target, const StickPattern& proto, const QGrid& grid,
                        const LatentBounds& bounds = {}, std::size_t max_iterations = 200);

// JS distance from each demixed pattern to its best-fitting prototype.
FidelityReport fidelity_loss(std::span<const std::vector<double>> demixed, const PrototypeLibrary& lib, const QGrid& grid,
                             const LatentBounds& bounds = {});

// Fraction of points whose active sets match exactly.
double activation_accuracy(std::span<const ActiveSet> predicted, std::span<const ActiveSet> truth);

struct RuleReport {
  double gibbs_rate = 1.0;
  double gibbs_alloy_rate = 1.0;
  double connectivity_rate = 1.0;
  std::vector<bool> gibbs_ok;         // per point: at most 3 active
  std::vector<bool> alloyed;          // per point: in an alloying region
  std::vector<bool> gibbs_alloy_ok;   // per point: not alloyed, or at most 2 active
  std::vector<bool> connectivity_ok;  // per point: its active set is one connected region
  std::size_t unique_sets = 0;
  std::size_t connected_sets = 0;
};

// Alloying regions: endpoints of edges whose active sets are identical and
// whose shift ratios differ by more than the threshold on some active phase.
RuleReport rule_report(const Solution& sol, const CompositionGraph& graph, double alloy_threshold = 0.001);

}  // namespace phasemap
