#pragma once

// End-to-end solve: train the encoder on a dataset, post-process the final
// latents into a solution and score it against the thermodynamic rules.

#include "phasemap/eval.hpp"
#include "phasemap/trainer.hpp"

#include <vector>

namespace phasemap {

struct SolveOptions {
  TrainConfig train;
  // Desk-scale defaults; the full-size architecture is {1024, 1024, 512}
  // and {512, 512, 32}.
  std::vector<std::size_t> hidden = {256, 256, 128};
  std::vector<std::size_t> amp_hidden = {128, 128, 32};
  LatentBounds bounds;
  double cutoff = kActivationCutoff;
};

struct SolveOutput {
  EncoderConfig encoder;
  TrainResult training;
  Solution solution;
  RuleReport rules;
};

SolveOutput solve(const XrdDataset& ds, const PrototypeLibrary& lib, const SolveOptions& options);

// Reconstruction loss of each point under its raw (pre-cutoff) latent state.
std::vector<double> reconstruction_losses(const XrdDataset& ds, const PrototypeLibrary& lib,
                                          std::span<const LatentState> latents);

// Solves every point on its own (one-point dataset, connectivity and alloy
// terms off) and returns the per-point active sets.
std::vector<ActiveSet> solve_points_independently(const XrdDataset& ds, const PrototypeLibrary& lib,
                                                  const SolveOptions& options);

}  // namespace phasemap
