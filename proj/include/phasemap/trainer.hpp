#pragma once

// Constraint-aware stochastic gradient descent: batches points along sampled
// composition-graph paths, adds k-sparsity and connectivity penalties to the
// reconstruction loss, and adapts thresholds and penalty weights from the
// observed constraint satisfaction.

#include "phasemap/domain.hpp"
#include "phasemap/encoder.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasemap {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t steps = 2000;
  std::size_t paths_per_step = 8;
  std::size_t path_len = kDefaultPathLength;
  std::size_t pool_size = 100000;
  double lambda_ks = 1.0;
  double lambda_conn = 0.01;
  // Weight of a plain entropy (cardinality) term on every batch point; keeps
  // weak phases from absorbing noise background.
  double lambda_card = 0.4;
  double rho = 1.5;          // weight growth factor for violated families
  double weight_cap = 100.0; // cap as a multiple of the initial weight
  double gamma = 0.9;        // threshold shrink factor
  double eps_active = 0.01;
  double alloy_threshold = 0.001;
  bool alloy_rule = true;
  // An edge is flagged as alloyed once shifting has been seen on it in this
  // many separate steps; a single transient misassignment is not enough.
  std::size_t alloy_confirmations = 3;
  // Steps before threshold/weight bookkeeping starts; the latent space is
  // meaningless while the encoder is still at its initialization.
  std::size_t warmup_steps = 500;
  // Every this many steps the whole map is encoded, its constraint
  // violations counted and the penalty weights revisited.
  std::size_t adjust_every = 50;
  // A family counts as violated when more than this fraction of its
  // checks failed.
  double violation_tolerance = 0.02;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const;
};

struct ThresholdState {
  std::vector<double> c;  // k-sparsity threshold per point
  std::vector<int> k;     // max phase count per point (3, or 2 once alloyed)
  std::set<Edge> alloyed_edges;
  std::map<Edge, std::size_t> alloy_hits;  // detections of not-yet-flagged edges

  static ThresholdState initial(std::size_t n);
};

struct PenaltyWeights {
  double ksparsity = 0.0;
  double connectivity = 0.0;
};

struct ViolationReport {
  std::size_t ksparsity_checks = 0;
  std::size_t ksparsity_violations = 0;
  std::size_t connectivity_checks = 0;
  std::size_t connectivity_violations = 0;

  ViolationReport& operator+=(const ViolationReport& other);
};

// Edge between two positions of a batch (indices into the points span).
struct BatchEdge {
  std::size_t a = 0;
  std::size_t b = 0;
};

// Applies the threshold rules to the points of one batch. points[i] is the
// dataset index of latents[i]; duplicated points are processed once.
//  - H(P) <= c and more than k entries above eps_active: c <- gamma * c
//  - an edge whose endpoints carry the same active set and whose shift
//    ratios differ by more than alloy_threshold on a shared phase counts a
//    detection; after alloy_confirmations detections it stays alloyed for
//    the rest of the run: k <- 2 and c <- min(c, ln 2) at both ends.
ThresholdState adjust_thresholds(ThresholdState state, std::span<const std::size_t> points,
                                 std::span<const LatentState> latents, std::span<const BatchEdge> edges,
                                 const TrainConfig& cfg, bool check_alloy = true);

// Violations over the full map: points with more than k_i phases above
// eps_active, and active sets whose points do not form one connected region
// of the composition graph.
ViolationReport check_violations(const ThresholdState& state, std::span<const LatentState> latents,
                                 const CompositionGraph& graph, const TrainConfig& cfg);

// Violated families (rate above tolerance) grow by rho, capped at
// weight_cap times their initial value; satisfied families are unchanged.
PenaltyWeights adjust_weights(PenaltyWeights current, const PenaltyWeights& initial, const ViolationReport& report,
                              const TrainConfig& cfg);

struct StepLog {
  std::size_t step = 0;
  double total = 0.0;
  double reconstruction = 0.0;
  double js = 0.0;
  double ksparsity = 0.0;
  double connectivity = 0.0;
  double cardinality = 0.0;
  double lambda_ks = 0.0;
  double lambda_conn = 0.0;
  std::size_t batch_points = 0;
  std::size_t ks_violations = 0;
  std::size_t conn_violations = 0;
  double mean_threshold = 0.0;
  double min_threshold = 0.0;
  std::size_t alloyed_points = 0;
};

// One JSON object per line.
std::string format_log(std::span<const StepLog> log);

struct TrainResult {
  EncoderParams params;
  std::vector<StepLog> log;
  ThresholdState thresholds;
  PenaltyWeights weights;
  std::vector<LatentState> latents;  // final encoding of every point
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, EncoderParams last_good, std::size_t step)
      : std::runtime_error(what), last_good_(std::move(last_good)), step_(step) {}
  const EncoderParams& last_good() const { return last_good_; }
  std::size_t step() const { return step_; }

 private:
  EncoderParams last_good_;
  std::size_t step_;
};

// Encoder configuration sized for a dataset and library (k = library's
// largest peak count).
EncoderConfig encoder_config_for(const XrdDataset& ds, const PrototypeLibrary& lib, std::vector<std::size_t> hidden,
                                 std::vector<std::size_t> amp_hidden, LatentBounds bounds = {});

TrainResult train(const XrdDataset& ds, const PrototypeLibrary& lib, const EncoderConfig& enc, const TrainConfig& cfg,
                  const std::optional<EncoderParams>& warm_start = std::nullopt);

}  // namespace phasemap
