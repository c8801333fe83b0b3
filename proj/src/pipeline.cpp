#include "phasemap/pipeline.hpp"

#include <stdexcept>

namespace phasemap {

std::vector<double> reconstruction_losses(const XrdDataset& ds, const PrototypeLibrary& lib,
                                          std::span<const LatentState> latents) {
  if (latents.size() != ds.n) throw std::invalid_argument("reconstruction_losses: latent count does not match dataset");
  std::vector<double> out(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const LatentState& s = latents[i];
    std::vector<std::vector<double>> renders;
    for (std::size_t j = 0; j < lib.size(); ++j) {
      renders.push_back(render_phase(lib[j], s.alpha[j], s.sigma[j], s.amp_row(j), ds.grid).values);
    }
    out[i] = reconstruction_loss(mix(renders, s.P), ds.pattern(i)).total;
  }
  return out;
}

SolveOutput solve(const XrdDataset& ds, const PrototypeLibrary& lib, const SolveOptions& options) {
  SolveOutput out;
  out.encoder = encoder_config_for(ds, lib, options.hidden, options.amp_hidden, options.bounds);
  out.training = train(ds, lib, out.encoder, options.train);
  out.solution = postprocess(out.training.latents, lib, ds.grid, ds.graph, options.cutoff, out.training.thresholds.k);
  out.solution.recon_loss = reconstruction_losses(ds, lib, out.training.latents);
  out.rules = rule_report(out.solution, ds.graph, options.train.alloy_threshold);
  return out;
}

std::vector<ActiveSet> solve_points_independently(const XrdDataset& ds, const PrototypeLibrary& lib,
                                                  const SolveOptions& options) {
  SolveOptions single = options;
  single.train.lambda_conn = 0.0;
  single.train.alloy_rule = false;
  single.train.pool_size = 1;
  // A one-point graph only yields one-point paths, so extra paths would
  // repeat the same pattern without changing the objective.
  single.train.paths_per_step = 1;
  std::vector<ActiveSet> sets;
  sets.reserve(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::size_t index[] = {i};
    const XrdDataset one = ds.subset(index);
    const EncoderConfig enc = encoder_config_for(one, lib, single.hidden, single.amp_hidden, single.bounds);
    const TrainResult r = train(one, lib, enc, single.train);
    sets.push_back(active_set_after_cutoff(r.latents.front().P, single.cutoff));
  }
  return sets;
}

}  // namespace phasemap
