#include "phasemap/cli.hpp"

#include "phasemap/pipeline.hpp"
#include "phasemap/report.hpp"
#include "phasemap/solution_io.hpp"
#include "phasemap/synth.hpp"
#include "phasemap/textio.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace phasemap::cli {

namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
  SynthSpec spec;
  std::uint64_t seed = 0;
  fs::path out;
};

struct SolveArgs {
  fs::path dataset, prototypes, out;
  SolveOptions options;
};

struct EvaluateArgs {
  fs::path solution, dataset, prototypes, truth, out;
};

struct ReportArgs {
  fs::path solution, dataset, prototypes, out;
};

std::string rate(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(4);
  s << v;
  return s.str();
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const Benchmark b = generate(a.spec, a.seed);
  fs::create_directories(a.out);
  save_dataset(b.dataset, a.out / "dataset.csv");
  io::write_atomic(a.out / "prototypes.csv", format_prototypes(b.library));
  io::write_atomic(a.out / "truth.csv", format_truth(b.truth, b.library));
  out << "generated " << b.dataset.n << " points, " << b.library.size() << " phases, " << a.spec.fields
      << " phase fields in " << a.out.string() << '\n';
  return kExitOk;
}

int cmd_solve(const SolveArgs& a, std::ostream& out, std::ostream& err) {
  const XrdDataset ds = load_dataset(a.dataset);
  std::vector<std::string> warnings;
  const PrototypeLibrary lib = load_prototypes(a.prototypes, ds.grid, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  fs::create_directories(a.out);
  SolveOutput result;
  try {
    result = solve(ds, lib, a.options);
  } catch (const TrainingDiverged& e) {
    std::ostringstream ckpt;
    e.last_good().save(ckpt);
    io::write_atomic(a.out / "checkpoint.bin", ckpt.str());
    err << "error: " << e.what() << "; last good parameters saved to " << (a.out / "checkpoint.bin").string() << '\n';
    return kExitFailure;
  }
  io::write_atomic(a.out / "solution.txt", format_solution(result.solution, a.options.cutoff, result.rules));
  io::write_atomic(a.out / "train_log.jsonl", format_log(result.training.log));
  std::ostringstream ckpt;
  result.training.params.save(ckpt);
  io::write_atomic(a.out / "checkpoint.bin", ckpt.str());

  const auto& last = result.training.log.back();
  const auto active = result.solution.active_phases();
  out << "steps: " << result.training.log.size() << "\nfinal loss: " << io::format_double(last.total)
      << "\nreconstruction: " << io::format_double(last.reconstruction) << "\nactive phases: " << active.size() << " of "
      << lib.size() << "\nphase fields: " << result.solution.fields.size() << "\ngibbs rate: " << rate(result.rules.gibbs_rate)
      << "\ngibbs-alloy rate: " << rate(result.rules.gibbs_alloy_rate)
      << "\nconnectivity rate: " << rate(result.rules.connectivity_rate) << '\n';
  return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const XrdDataset ds = load_dataset(a.dataset);
  const Solution sol = load_solution(a.solution);
  if (sol.n != ds.n) {
    throw std::runtime_error("solution has " + std::to_string(sol.n) + " points but dataset has " + std::to_string(ds.n));
  }
  if (!(sol.grid == ds.grid)) throw std::runtime_error("solution and dataset use different q grids");
  const PrototypeLibrary lib = load_prototypes(a.prototypes, ds.grid);
  if (lib.size() != sol.phases()) throw std::runtime_error("solution and prototype library disagree on the phase count");
  for (std::size_t j = 0; j < lib.size(); ++j) {
    if (lib[j].phase_id != sol.phase_ids[j]) throw std::runtime_error("solution and prototype library list phases in different order");
  }

  const RuleReport rules = rule_report(sol, ds.graph);
  const FidelityReport fid = fidelity_loss(sol.demixed, lib, ds.grid);
  std::optional<double> accuracy;
  if (!a.truth.empty()) {
    const GroundTruth truth = load_truth(a.truth, lib, ds.n);
    accuracy = activation_accuracy(sol.active_sets(), truth.active_sets());
  }

  std::ostringstream text;
  text << "points: " << sol.n << '\n';
  if (!sol.recon_loss.empty()) {
    std::vector<double> l = sol.recon_loss;
    std::sort(l.begin(), l.end());
    double mean = 0.0;
    for (double v : l) mean += v / static_cast<double>(l.size());
    text << "reconstruction loss mean: " << io::format_double(mean) << "\nreconstruction loss median: "
         << io::format_double(l[l.size() / 2]) << "\nreconstruction loss max: " << io::format_double(l.back()) << '\n';
  } else {
    text << "reconstruction loss: not recorded\n";
  }
  text << "gibbs rate: " << rate(rules.gibbs_rate) << "\ngibbs-alloy rate: " << rate(rules.gibbs_alloy_rate)
       << "\nconnectivity rate: " << rate(rules.connectivity_rate) << "\nactivation accuracy: "
       << (accuracy ? rate(*accuracy) : std::string("n/a")) << "\nfidelity (JS distance, summed): " << io::format_double(fid.sum) << '\n';

  std::string csv = "phase_id,fidelity_js_distance,best_prototype\n";
  for (std::size_t j = 0; j < sol.phases(); ++j) {
    const bool has = !sol.demixed[j].empty();
    csv += sol.phase_ids[j] + ',' + (has ? io::format_double(fid.per_phase[j]) : std::string("n/a")) + ',' +
           (has ? lib[fid.best_prototype[j]].phase_id : std::string("n/a")) + '\n';
  }
  out << text.str() << csv;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    io::write_atomic(a.out / "metrics.txt", text.str());
    io::write_atomic(a.out / "fidelity.csv", csv);
  }
  return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  const XrdDataset ds = load_dataset(a.dataset);
  const Solution sol = load_solution(a.solution);
  if (sol.n != ds.n) throw std::runtime_error("solution and dataset point counts differ");
  std::optional<PrototypeLibrary> lib;
  if (!a.prototypes.empty()) lib = load_prototypes(a.prototypes, ds.grid);
  const ReportOutput rep = write_report(sol, ds.graph.points(), lib ? &*lib : nullptr, a.out);
  for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
  for (const auto& f : rep.files) out << f.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised phase mapping of X-ray diffraction composition maps"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic benchmark (dataset, metadata, prototypes, ground truth)");
  g->add_option("--phases", gen.spec.phases, "Prototype count")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--points-side", gen.spec.side, "Triangular lattice side; side*(side+1)/2 points")
      ->check(CLI::Range(2, 200))
      ->capture_default_str();
  g->add_option("--fields", gen.spec.fields, "Phase fields")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--peaks-min", gen.spec.peaks_min, "Fewest peaks per prototype")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--peaks-max", gen.spec.peaks_max, "Most peaks per prototype")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--q-min", gen.spec.q_min, "Grid start")->capture_default_str();
  g->add_option("--q-max", gen.spec.q_max, "Grid end")->capture_default_str();
  g->add_option("--grid-size", gen.spec.d, "Grid points")->check(CLI::Range(2, 100000))->capture_default_str();
  g->add_option("--alloy-gradient", gen.spec.alloy_gradient, "Extreme shift-ratio difference in alloyed fields")
      ->check(CLI::Range(0.0, 0.1))
      ->capture_default_str();
  g->add_option("--alloy-fraction", gen.spec.alloy_fraction, "Share of one/two-phase fields that alloy")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  g->add_option("--noise", gen.spec.noise, "Gaussian noise std")->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--overlap", gen.spec.overlap, "Peak sharing between prototypes")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  SolveArgs sv;
  TrainConfig& tc = sv.options.train;
  auto* s = app.add_subcommand("solve", "Train the solver on a dataset and write solution, log and checkpoint");
  s->set_config("--config", "", "Flat key = value file with option defaults (flags take precedence)");
  s->add_option("--dataset", sv.dataset, "Dataset CSV (metadata file beside it)")->required()->check(CLI::ExistingFile);
  s->add_option("--prototypes", sv.prototypes, "Prototype CSV")->required()->check(CLI::ExistingFile);
  s->add_option("--out", sv.out, "Output directory")->required();
  s->add_option("--steps", tc.steps, "Optimization steps")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--lr", tc.lr, "Adam learning rate (0.0001, 0.0005 or 0.001 recommended)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  s->add_option("--paths-per-step", tc.paths_per_step, "Paths per batch")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--path-length", tc.path_len, "Points per sampled path")->check(CLI::Range(2, 1000))->capture_default_str();
  s->add_option("--pool-size", tc.pool_size, "Sampled path pool size")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--lambda-ks", tc.lambda_ks, "k-sparsity weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_option("--lambda-conn", tc.lambda_conn, "Connectivity weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_option("--lambda-card", tc.lambda_card, "Entropy weight on every point")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_option("--rho", tc.rho, "Weight growth factor")->check(CLI::Range(1.0 + 1e-12, 1e6))->capture_default_str();
  s->add_option("--weight-cap", tc.weight_cap, "Weight cap (multiple of initial)")->check(CLI::Range(1.0, 1e9))->capture_default_str();
  s->add_option("--gamma", tc.gamma, "Threshold shrink factor")->check(CLI::Range(1e-9, 1.0 - 1e-9))->capture_default_str();
  s->add_option("--warmup", tc.warmup_steps, "Steps before threshold and weight adaptation")->capture_default_str();
  s->add_option("--adjust-every", tc.adjust_every, "Steps between weight adjustments")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--alloy-confirmations", tc.alloy_confirmations, "Detections before an edge counts as alloyed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bool no_alloy = false;
  s->add_flag("--no-alloy-rule", no_alloy, "Disable alloy detection");
  s->add_option("--hidden", sv.options.hidden, "Hidden sizes of the activation, shift and width networks")->expected(3)->capture_default_str();
  s->add_option("--amp-hidden", sv.options.amp_hidden, "Hidden sizes of the amplitude network")->expected(3)->capture_default_str();
  s->add_option("--cutoff", sv.options.cutoff, "Activation cutoff")->check(CLI::Range(0.0, 0.5))->capture_default_str();
  s->add_option("--seed", tc.seed, "Random seed")->capture_default_str();
  s->add_option("--workers", tc.workers, "Render threads (1 keeps runs bit-reproducible)")->check(CLI::Range(1, 256))->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a solution: reconstruction, fidelity, rule rates, accuracy");
  e->add_option("--solution", ev.solution, "Solution file")->required()->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--prototypes", ev.prototypes, "Prototype CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--truth", ev.truth, "Ground-truth CSV (accuracy is n/a without it)")->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Directory for metrics.txt and fidelity.csv");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Write SVG figures for a solution");
  r->add_option("--solution", rp.solution, "Solution file")->required()->check(CLI::ExistingFile);
  r->add_option("--dataset", rp.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
  r->add_option("--prototypes", rp.prototypes, "Prototype CSV for stick overlays")->check(CLI::ExistingFile);
  r->add_option("--out", rp.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kExitUsage;
  }

  // Cross-flag consistency is a usage problem, checked before any work.
  try {
    if (*g) gen.spec.validate();
    if (*s) {
      tc.alloy_rule = !no_alloy;
      tc.validate();
    }
  } catch (const std::invalid_argument& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*s) return cmd_solve(sv, out, err);
    if (*e) return cmd_evaluate(ev, out);
    if (*r) return cmd_report(rp, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace phasemap::cli
