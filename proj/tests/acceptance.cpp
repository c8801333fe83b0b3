// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit status is non-zero if any fails.

#include "gradcheck.hpp"

#include "phasemap/cli.hpp"
#include "phasemap/pipeline.hpp"
#include "phasemap/relax.hpp"
#include "phasemap/solution_io.hpp"
#include "phasemap/synth.hpp"
#include "phasemap/textio.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
namespace gc = phasemap::gradcheck;
namespace relax = phasemap::relax;
using namespace phasemap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Shared by criteria 3 and 7.
struct StandardRun {
  Benchmark bench;
  SolveOutput out;
  double seconds = 0.0;
};

const StandardRun& standard_run() {
  static const StandardRun run = [] {
    StandardRun r;
    r.bench = generate(SynthSpec{}, 7);
    const auto t0 = Clock::now();
    r.out = solve(r.bench.dataset, r.bench.library, SolveOptions{});
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Verdict gradient_check() {
  const auto t0 = Clock::now();
  double worst_op = 0.0, worst_dec = 0.0, worst_pipe = 0.0;
  std::string where;
  std::size_t checks = 0;
  auto track = [&](double& worst, const gc::FdResult& r, const std::string& label) {
    checks += r.checked;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      if (r.max_rel_error > gc::kFdTolerance) where = label + " " + r.worst;
    }
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& c : gc::op_cases(seed)) track(worst_op, gc::fd_check(c.graph, c.inputs), c.name);
    const auto dec = gc::decoder_case(seed);
    track(worst_dec, gc::fd_check(dec.graph, dec.inputs), "decoder seed " + std::to_string(seed));
    const auto pipe = gc::pipeline_case(seed);
    track(worst_pipe, gc::fd_check(pipe.graph, pipe.inputs, gc::kFdStep, gc::sample_coordinates(pipe.inputs, 64, seed)),
          "pipeline seed " + std::to_string(seed));
  }
  const double elapsed = seconds_since(t0);
  const double worst = std::max({worst_op, worst_dec, worst_pipe});
  Verdict v;
  v.pass = worst <= gc::kFdTolerance && elapsed < 60.0;
  v.detail = "max rel error ops " + sci(worst_op) + ", decoder " + sci(worst_dec) + ", pipeline " + sci(worst_pipe) +
             " (tol 1e-4, h 1e-5, 100 seeds, " + std::to_string(checks) + " coordinates) in " + fmt(elapsed, 1) + " s" +
             (where.empty() ? "" : "; worst at " + where);
  return v;
}

Verdict relaxation_exactness() {
  double worst = 0.0;
  std::size_t zero_cases = 0;
  for (int code = 0; code < 256; ++code) {
    std::vector<std::vector<double>> ps;
    std::array<int, 4> counts{};
    for (int v = 0; v < 4; ++v) {
      const int sym = (code >> (2 * v)) & 3;
      ++counts[sym];
      std::vector<double> p(4, 0.0);
      p[sym] = 1.0;
      ps.push_back(p);
    }
    double h = 0.0;
    for (int c : counts) {
      if (c > 0) h -= (c / 4.0) * std::log(c / 4.0);
    }
    const double got = relax::alldiff_penalty(ps);
    worst = std::max(worst, std::abs(got - (std::log(4.0) - h)));
    const bool distinct = counts == std::array<int, 4>{1, 1, 1, 1};
    if (distinct != (std::abs(got) < 1e-10)) worst = std::max(worst, 1.0);
    zero_cases += distinct ? 1 : 0;
  }
  const double ln3 = std::log(3.0);
  const double k3 = relax::ksparsity_penalty(std::vector<double>(3, 1.0 / 3.0), ln3);
  const double k4 = relax::ksparsity_penalty(std::vector<double>(4, 0.25), ln3);
  const double err3 = std::abs(k3);
  const double err4 = std::abs(k4 - (std::log(4.0) - ln3));
  Verdict v;
  v.pass = worst <= 1e-10 && err3 <= 1e-10 && err4 <= 1e-10 && zero_cases == 24;
  v.detail = "alldiff 256 cases max error " + sci(worst) + " (" + std::to_string(zero_cases) +
             " zero-penalty permutations); ksparsity(uniform3, ln3) = " + sci(k3) + ", ksparsity(uniform4, ln3) error " +
             sci(err4);
  return v;
}

Verdict standard_benchmark() {
  const auto& r = standard_run();
  const auto truth = r.bench.truth.active_sets();
  const double acc = activation_accuracy(r.out.solution.active_sets(), truth);
  const auto fid = fidelity_loss(r.out.solution.demixed, r.bench.library, r.bench.dataset.grid);
  Verdict v;
  v.pass = acc >= 0.95 && r.out.rules.gibbs_rate == 1.0 && r.out.rules.connectivity_rate >= 0.95 && fid.sum <= 0.05 &&
           r.seconds <= 900.0;
  v.detail = "accuracy " + fmt(acc) + " (>= 0.95), gibbs " + fmt(r.out.rules.gibbs_rate) + " (= 1), connectivity " +
             fmt(r.out.rules.connectivity_rate) + " (>= 0.95), fidelity sum " + sci(fid.sum) + " (<= 0.05), runtime " +
             fmt(r.seconds, 1) + " s (<= 900)";
  return v;
}

Verdict down_scaling() {
  const Benchmark bench = generate(SynthSpec{}, 7);
  const std::array<std::size_t, 4> sizes = {10, 45, 105, 210};
  std::array<double, 4> mean{};
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      std::vector<std::size_t> idx(bench.dataset.n);
      std::iota(idx.begin(), idx.end(), 0);
      std::mt19937_64 rng(seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(sizes[s]);
      std::sort(idx.begin(), idx.end());
      const XrdDataset ds = bench.dataset.subset(idx);
      SolveOptions opt;
      opt.train.seed = seed;
      const auto out = solve(ds, bench.library, opt);
      mean[s] += activation_accuracy(out.solution.active_sets(), bench.truth.subset(idx).active_sets()) / 3.0;
    }
  }
  bool monotone = true;
  for (std::size_t s = 1; s < sizes.size(); ++s) monotone = monotone && mean[s] >= mean[s - 1];
  Verdict v;
  v.pass = monotone && mean[3] - mean[0] >= 0.15;
  v.detail = "mean accuracy N=10 " + fmt(mean[0]) + ", N=45 " + fmt(mean[1]) + ", N=105 " + fmt(mean[2]) + ", N=210 " +
             fmt(mean[3]) + " (non-decreasing, gain " + fmt(mean[3] - mean[0]) + " >= 0.15)";
  return v;
}

Verdict exhaustive_oracle() {
  SynthSpec spec;
  spec.phases = 5;
  spec.side = 6;
  spec.fields = 6;
  spec.noise = 0.0;
  spec.alloy_fraction = 0.0;
  const Benchmark bench = generate(spec, 5);
  std::vector<std::size_t> idx(20);
  std::iota(idx.begin(), idx.end(), 0);
  const XrdDataset ds = bench.dataset.subset(idx);
  const auto out = solve(ds, bench.library, SolveOptions{});
  DemixOptions demix;
  for (double s = spec.sigma_low; s <= spec.sigma_high + 1e-12; s += 0.025) demix.sigmas.push_back(s);
  std::size_t match = 0, oracle_truth = 0;
  const auto truth = bench.truth.subset(idx).active_sets();
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto oracle = brute_force_demix(ds.pattern(i), bench.library, ds.grid, demix);
    match += oracle.phases == out.solution.active_set(i) ? 1 : 0;
    oracle_truth += oracle.phases == truth[i] ? 1 : 0;
  }
  Verdict v;
  v.pass = match >= 19;
  v.detail = "solver matches exhaustive demixing on " + std::to_string(match) + "/20 points (>= 19); oracle matches truth on " +
             std::to_string(oracle_truth) + "/20";
  return v;
}

double agreement(std::span<const ActiveSet> a, std::span<const ActiveSet> b) { return activation_accuracy(a, b); }

Verdict single_point_ablation() {
  // Fully shared secondary peaks plus 5% noise: a lone pattern admits
  // several near-equal explanations.
  SynthSpec spec;
  spec.side = 8;
  spec.fields = 8;
  spec.overlap = 1.0;
  spec.noise = 0.05;
  const Benchmark bench = generate(spec, 3);
  const SolveOptions opt;
  const auto joint = solve(bench.dataset, bench.library, opt).solution.active_sets();
  const auto single = solve_points_independently(bench.dataset, bench.library, opt);
  const auto truth = bench.truth.active_sets();
  const double single_joint = agreement(single, joint);
  const double joint_truth = agreement(joint, truth);
  Verdict v;
  v.pass = single_joint < joint_truth;
  v.detail = "agreement(single, joint) " + fmt(single_joint) + " < agreement(joint, truth) " + fmt(joint_truth) +
             "; agreement(single, truth) " + fmt(agreement(single, truth)) + " on " + std::to_string(bench.dataset.n) +
             " overlapped points";
  return v;
}

Verdict phase_caps() {
  const auto& r = standard_run();
  const Solution& sol = r.out.solution;
  std::size_t alloyed = 0, alloy_bad = 0, over = 0;
  for (std::size_t i = 0; i < sol.n; ++i) {
    const std::size_t active = sol.active_set(i).size();
    const bool is_alloyed = (!sol.phase_cap.empty() && sol.phase_cap[i] == 2) || r.out.rules.alloyed[i];
    alloyed += is_alloyed ? 1 : 0;
    alloy_bad += is_alloyed && active > 2 ? 1 : 0;
    over += active > 3 ? 1 : 0;
  }
  Verdict v;
  v.pass = alloy_bad == 0 && over == 0;
  v.detail = std::to_string(alloyed) + " alloyed points, " + std::to_string(alloy_bad) + " with > 2 phases; " +
             std::to_string(over) + " of " + std::to_string(sol.n) + " points with > 3 phases";
  return v;
}

Verdict reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "phasemap_acceptance_repro";
  fs::remove_all(dir);
  auto call = [](std::vector<std::string> args) {
    args.insert(args.begin(), "phasemap");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  Verdict v;
  const int g = call({"generate", "--seed", "7", "--out", (dir / "bench").string()});
  const int a = call({"solve", "--dataset", (dir / "bench" / "dataset.csv").string(), "--prototypes",
                      (dir / "bench" / "prototypes.csv").string(), "--seed", "5", "--out", (dir / "a").string()});
  const int b = call({"solve", "--dataset", (dir / "bench" / "dataset.csv").string(), "--prototypes",
                      (dir / "bench" / "prototypes.csv").string(), "--seed", "5", "--out", (dir / "b").string()});
  if (g != 0 || a != 0 || b != 0) {
    v.detail = "command failed (exit codes " + std::to_string(g) + ", " + std::to_string(a) + ", " + std::to_string(b) + ")";
    return v;
  }
  const std::string sa = io::read_file(dir / "a" / "solution.txt");
  const std::string sb = io::read_file(dir / "b" / "solution.txt");
  v.pass = !sa.empty() && sa == sb;
  v.detail = "two solves with seed 5: solution files " + std::string(sa == sb ? "byte-identical" : "differ") + " (" +
             std::to_string(sa.size()) + " bytes)";
  fs::remove_all(dir);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient check", gradient_check},
      {"relaxation exactness", relaxation_exactness},
      {"standard benchmark", standard_benchmark},
      {"down-scaling", down_scaling},
      {"exhaustive oracle", exhaustive_oracle},
      {"single-point ablation", single_point_ablation},
      {"phase caps", phase_caps},
      {"reproducibility", reproducibility},
  };
  std::set<std::size_t> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  int failures = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    if (!wanted.empty() && !wanted.contains(c + 1)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = criteria[c].second();
    } catch (const std::exception& e) {
      v.detail = std::string("exception: ") + e.what();
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c + 1 << " (" << criteria[c].first << "): " << v.detail
              << " [" << fmt(seconds_since(t0), 1) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
