#include "phasemap/cli.hpp"
#include "phasemap/report.hpp"
#include "phasemap/solution_io.hpp"
#include "phasemap/synth.hpp"
#include "phasemap/textio.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
namespace cli = phasemap::cli;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "phasemap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("phasemap_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Small benchmark: 21 points, 3 phases.
  fs::path generate_small(const std::string& name = "bench") {
    const fs::path out = dir_ / name;
    const auto o = run({"generate", "--phases", "3", "--points-side", "6", "--fields", "4", "--grid-size", "120", "--seed",
                        "2", "--out", out.string()});
    EXPECT_EQ(o.code, cli::kExitOk) << o.err;
    return out;
  }

  Outcome solve_small(const fs::path& bench, const fs::path& out) {
    return run({"solve", "--dataset", (bench / "dataset.csv").string(), "--prototypes", (bench / "prototypes.csv").string(),
                "--out", out.string(), "--steps", "40", "--warmup", "10", "--adjust-every", "10", "--pool-size", "100",
                "--paths-per-step", "2", "--hidden", "16", "16", "8", "--amp-hidden", "8", "8", "4", "--lr", "0.0005"});
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"generate", "--phases", "0", "--out", (dir_ / "x").string()}).code, cli::kExitUsage);
  std::ofstream(dir_ / "data.csv") << "x\n";
  const auto missing = run({"solve", "--dataset", (dir_ / "data.csv").string(), "--out", (dir_ / "o").string()});
  EXPECT_EQ(missing.code, cli::kExitUsage);
  EXPECT_NE(missing.err.find("--prototypes"), std::string::npos) << missing.err;
  // Flags that parse individually but conflict as a whole.
  EXPECT_EQ(run({"generate", "--phases", "2", "--fields", "5", "--out", (dir_ / "x").string()}).code, cli::kExitUsage);
}

TEST_F(Cli, GenerateWritesFourDeterministicFiles) {
  const fs::path a = dir_ / "a";
  const fs::path b = dir_ / "b";
  ASSERT_EQ(run({"generate", "--seed", "4", "--out", a.string()}).code, cli::kExitOk);
  ASSERT_EQ(run({"generate", "--seed", "4", "--out", b.string()}).code, cli::kExitOk);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    const auto name = entry.path().filename();
    EXPECT_EQ(phasemap::io::read_file(entry.path()), phasemap::io::read_file(b / name)) << name;
  }
  EXPECT_EQ(files, 4u);
  const auto ds = phasemap::load_dataset(a / "dataset.csv");
  EXPECT_EQ(ds.n, 210u);
}

TEST_F(Cli, SolveIsReproducibleAndAcceptsLearningRate) {
  const auto bench = generate_small();
  const auto first = solve_small(bench, dir_ / "s1");
  ASSERT_EQ(first.code, cli::kExitOk) << first.err;
  ASSERT_EQ(solve_small(bench, dir_ / "s2").code, cli::kExitOk);
  for (const char* f : {"solution.txt", "train_log.jsonl", "checkpoint.bin"}) {
    EXPECT_EQ(phasemap::io::read_file(dir_ / "s1" / f), phasemap::io::read_file(dir_ / "s2" / f)) << f;
  }
  EXPECT_NE(first.out.find("gibbs rate"), std::string::npos);
}

TEST_F(Cli, EvaluateScoresTruthAgainstItself) {
  const auto bench = generate_small();
  // The ground truth written as a solution scores perfectly against itself.
  const auto ds = phasemap::load_dataset(bench / "dataset.csv");
  const auto lib = phasemap::load_prototypes(bench / "prototypes.csv", ds.grid);
  const auto truth = phasemap::load_truth(bench / "truth.csv", lib, ds.n);
  const auto sol = phasemap::truth_solution(truth, lib, ds);
  phasemap::io::write_atomic(dir_ / "truth_solution.txt", phasemap::format_solution(sol));
  const std::vector<std::string> base = {"evaluate", "--solution", (dir_ / "truth_solution.txt").string(), "--dataset",
                                         (bench / "dataset.csv").string(), "--prototypes",
                                         (bench / "prototypes.csv").string()};
  auto with_truth = base;
  with_truth.insert(with_truth.end(), {"--truth", (bench / "truth.csv").string(), "--out", (dir_ / "eval").string()});
  const auto o = run(with_truth);
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_NE(o.out.find("activation accuracy: 1.0000"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("connectivity rate: 1.0000"), std::string::npos);
  EXPECT_NE(o.out.find("fidelity_js_distance"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "metrics.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "fidelity.csv"));
  const auto plain = run(base);
  ASSERT_EQ(plain.code, cli::kExitOk);
  EXPECT_NE(plain.out.find("activation accuracy: n/a"), std::string::npos);
}

TEST_F(Cli, EvaluateRejectsMismatchedInputsAtRuntime) {
  const auto bench = generate_small();
  const auto other = run({"generate", "--points-side", "5", "--phases", "3", "--fields", "3", "--grid-size", "120",
                          "--out", (dir_ / "other").string()});
  ASSERT_EQ(other.code, cli::kExitOk);
  ASSERT_EQ(solve_small(bench, dir_ / "s").code, cli::kExitOk);
  const auto o = run({"evaluate", "--solution", (dir_ / "s" / "solution.txt").string(), "--dataset",
                      (dir_ / "other" / "dataset.csv").string(), "--prototypes", (bench / "prototypes.csv").string()});
  EXPECT_EQ(o.code, cli::kExitFailure);
  EXPECT_NE(o.err.find("points"), std::string::npos);
}

TEST_F(Cli, ReportWritesDeterministicFigures) {
  const auto bench = generate_small();
  ASSERT_EQ(solve_small(bench, dir_ / "s").code, cli::kExitOk);
  const auto sol = phasemap::load_solution(dir_ / "s" / "solution.txt");
  const std::vector<std::string> args = {"report", "--solution", (dir_ / "s" / "solution.txt").string(), "--dataset",
                                         (bench / "dataset.csv").string(), "--prototypes",
                                         (bench / "prototypes.csv").string(), "--out"};
  auto a = args, b = args;
  a.push_back((dir_ / "r1").string());
  b.push_back((dir_ / "r2").string());
  ASSERT_EQ(run(a).code, cli::kExitOk);
  ASSERT_EQ(run(b).code, cli::kExitOk);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir_ / "r1")) {
    ++files;
    EXPECT_EQ(phasemap::io::read_file(entry.path()), phasemap::io::read_file(dir_ / "r2" / entry.path().filename()));
  }
  EXPECT_EQ(files, sol.active_phases().size() + 1);
}

TEST_F(Cli, ReportWarnsWithoutActivePhases) {
  phasemap::Solution empty;
  empty.grid = phasemap::QGrid(10, 20, 5);
  empty.phase_ids = {"a"};
  const auto rep = phasemap::write_report(empty, {}, nullptr, dir_ / "r");
  ASSERT_FALSE(rep.warnings.empty());
  EXPECT_NE(rep.warnings.front().find("no active phases"), std::string::npos);
  EXPECT_EQ(rep.files.size(), 1u);
}

// The installed binary maps errors to process exit codes.
TEST_F(Cli, BinaryExitCodes) {
  const std::string exe = PHASEMAP_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(exe + " --help"), 0);
  EXPECT_EQ(status(exe + " generate --phases 0 --out " + (dir_ / "x").string()), 2);
  EXPECT_EQ(status(exe + " generate --points-side 4 --fields 3 --grid-size 60 --out " + (dir_ / "g").string()), 0);
  std::ofstream(dir_ / "bad.csv") << "not,a,dataset\n";
  EXPECT_EQ(status(exe + " solve --dataset " + (dir_ / "bad.csv").string() + " --prototypes " +
                   (dir_ / "g" / "prototypes.csv").string() + " --out " + (dir_ / "o").string()),
            1);
}
