#include "phasemap/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using phasemap::SynthSpec;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.side = 8;
  s.fields = 8;
  s.d = 150;
  return s;
}

std::vector<double> mixture(const phasemap::PrototypeLibrary& lib, const phasemap::QGrid& grid,
                            const std::vector<double>& P, double sigma) {
  std::vector<std::vector<double>> renders;
  for (std::size_t j = 0; j < lib.size(); ++j) renders.push_back(phasemap::render_phase(lib[j], 1.0, sigma, {}, grid).values);
  return phasemap::mix(renders, P);
}

}  // namespace

TEST(Synth, DeterministicPerSeed) {
  const auto a = phasemap::generate(small_spec(), 5);
  const auto b = phasemap::generate(small_spec(), 5);
  EXPECT_EQ(a.dataset.intensities, b.dataset.intensities);
  EXPECT_EQ(a.truth.activations, b.truth.activations);
  EXPECT_EQ(a.truth.alpha, b.truth.alpha);
  EXPECT_EQ(phasemap::format_prototypes(a.library), phasemap::format_prototypes(b.library));
  EXPECT_NE(phasemap::generate(small_spec(), 6).dataset.intensities, a.dataset.intensities);
}

TEST(Synth, DefaultBenchmarkShape) {
  const auto b = phasemap::generate(SynthSpec{}, 7);
  EXPECT_EQ(b.dataset.n, 210u);
  EXPECT_EQ(b.library.size(), 6u);
  EXPECT_EQ(b.dataset.grid.size(), 300u);
  std::set<phasemap::ActiveSet> distinct;
  std::set<std::size_t> field_ids(b.truth.field.begin(), b.truth.field.end());
  EXPECT_EQ(field_ids.size(), 15u);
  for (const auto& s : b.truth.active_sets()) {
    distinct.insert(s);
    EXPECT_GE(s.size(), 1u);
    EXPECT_LE(s.size(), 3u);
  }
  EXPECT_EQ(distinct.size(), 15u);
  for (std::size_t i = 0; i < b.dataset.n; ++i) {
    const auto x = b.dataset.pattern(i);
    EXPECT_EQ(*std::max_element(x.begin(), x.end()), 1.0);
    EXPECT_GE(*std::min_element(x.begin(), x.end()), 0.0);
  }
}

TEST(Synth, TruthSatisfiesEveryRule) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto b = phasemap::generate(small_spec(), seed);
    const auto r = phasemap::rule_report(phasemap::truth_solution(b.truth, b.library, b.dataset), b.dataset.graph);
    EXPECT_EQ(r.gibbs_rate, 1.0);
    EXPECT_EQ(r.gibbs_alloy_rate, 1.0);
    EXPECT_EQ(r.connectivity_rate, 1.0);
  }
}

TEST(Synth, NoiseFreeSinglePrototypeIsItsRender) {
  SynthSpec s = small_spec();
  s.phases = 1;
  s.fields = 1;
  s.max_phases = 1;
  s.noise = 0.0;
  s.alloy_fraction = 0.0;
  const auto b = phasemap::generate(s, 2);
  const auto expected = phasemap::render_phase(b.library[0], 1.0, b.truth.sigma[0], {}, b.dataset.grid).values;
  for (std::size_t i = 0; i < b.dataset.n; ++i) {
    const auto x = b.dataset.pattern(i);
    for (std::size_t q = 0; q < x.size(); ++q) ASSERT_NEAR(x[q], expected[q], 1e-12);
  }
}

TEST(Synth, AlloyedFieldsSpanTheGradient) {
  SynthSpec s = small_spec();
  s.alloy_fraction = 1.0;
  const auto b = phasemap::generate(s, 4);
  const std::size_t m = b.truth.m;
  std::size_t alloyed = 0;
  for (std::size_t f = 0; f < s.fields; ++f) {
    std::map<std::size_t, std::pair<double, double>> range;  // phase -> (min, max) alpha
    std::size_t count = 0;
    for (std::size_t i = 0; i < b.truth.n; ++i) {
      if (b.truth.field[i] != f) continue;
      ++count;
      for (std::size_t j = 0; j < m; ++j) {
        if (b.truth.activations[i * m + j] <= 0.0) continue;
        auto [it, fresh] = range.try_emplace(j, b.truth.alpha[i * m + j], b.truth.alpha[i * m + j]);
        it->second.first = std::min(it->second.first, b.truth.alpha[i * m + j]);
        it->second.second = std::max(it->second.second, b.truth.alpha[i * m + j]);
      }
    }
    for (const auto& [j, r] : range) {
      if (b.truth.field_alloyed[f]) {
        EXPECT_NEAR(r.second - r.first, s.alloy_gradient, 1e-9) << "field " << f;
      } else {
        EXPECT_EQ(r.second, r.first);
      }
    }
    alloyed += b.truth.field_alloyed[f] ? 1 : 0;
    if (b.truth.field_alloyed[f]) {
      EXPECT_LE(range.size(), 2u);
      EXPECT_GE(count, 2u);
    }
  }
  EXPECT_GT(alloyed, 0u);
}

TEST(Synth, TruthCsvRoundTrip) {
  const auto b = phasemap::generate(small_spec(), 8);
  std::istringstream in(phasemap::format_truth(b.truth, b.library));
  const auto back = phasemap::parse_truth(in, b.library, b.truth.n);
  EXPECT_EQ(back.active_sets(), b.truth.active_sets());
  for (std::size_t i = 0; i < b.truth.activations.size(); ++i) {
    EXPECT_EQ(back.activations[i], b.truth.activations[i]);
    if (b.truth.activations[i] > 0.0) {
      EXPECT_EQ(back.alpha[i], b.truth.alpha[i]);
    }
  }
}

TEST(Synth, InfeasibleSpecsRejected) {
  SynthSpec s = small_spec();
  s.phases = 2;
  s.fields = 4;  // only {a}, {b}, {a,b} exist
  EXPECT_THROW(phasemap::generate(s, 1), std::invalid_argument);
  s = small_spec();
  s.phases = 0;
  EXPECT_THROW(phasemap::generate(s, 1), std::invalid_argument);
  s = small_spec();
  s.fields = 100;  // more fields than the 36 lattice points
  EXPECT_THROW(phasemap::generate(s, 1), std::invalid_argument);
  s = small_spec();
  s.min_activation = 0.4;
  EXPECT_THROW(phasemap::generate(s, 1), std::invalid_argument);
}

TEST(Demix, RecoversPurePhase) {
  SynthSpec s = small_spec();
  s.phases = 4;
  const auto b = phasemap::generate(s, 3);
  const double sigma = 0.5 * (phasemap::LatentBounds{}.sigma_min + phasemap::LatentBounds{}.sigma_max);
  const auto x = mixture(b.library, b.dataset.grid, {0, 0, 1, 0}, sigma);
  const auto r = phasemap::brute_force_demix(x, b.library, b.dataset.grid);
  EXPECT_EQ(r.phases, (phasemap::ActiveSet{2}));
  EXPECT_NEAR(r.activations[2], 1.0, 1e-9);
  EXPECT_NEAR(r.alpha[2], 1.0, 1e-12);
  EXPECT_LT(r.loss, 1e-6);
}

TEST(Demix, RecoversTwoPhaseRatio) {
  SynthSpec s = small_spec();
  s.phases = 4;
  const auto b = phasemap::generate(s, 3);
  const double sigma = 0.5 * (phasemap::LatentBounds{}.sigma_min + phasemap::LatentBounds{}.sigma_max);
  const auto x = mixture(b.library, b.dataset.grid, {0.6, 0, 0, 0.4}, sigma);
  const auto r = phasemap::brute_force_demix(x, b.library, b.dataset.grid);
  EXPECT_EQ(r.phases, (phasemap::ActiveSet{0, 3}));
  EXPECT_NEAR(r.activations[0], 0.6, 1e-6);
  EXPECT_NEAR(r.activations[3], 0.4, 1e-6);
}

TEST(Demix, TraceBelowCutoffIsDropped) {
  SynthSpec s = small_spec();
  s.phases = 4;
  const auto b = phasemap::generate(s, 3);
  const double sigma = 0.5 * (phasemap::LatentBounds{}.sigma_min + phasemap::LatentBounds{}.sigma_max);
  const auto x = mixture(b.library, b.dataset.grid, {0.5, 0.3, 0.195, 0.005}, sigma);
  const auto r = phasemap::brute_force_demix(x, b.library, b.dataset.grid);
  EXPECT_EQ(r.phases, (phasemap::ActiveSet{0, 1, 2}));
  EXPECT_EQ(r.activations[3], 0.0);
}

TEST(Demix, RejectsLargeLibraries) {
  std::vector<phasemap::StickPattern> sticks;
  for (int j = 0; j < 9; ++j) sticks.push_back({"p" + std::to_string(j), {{16.0 + 3.0 * j, 1.0}}});
  const phasemap::PrototypeLibrary lib(sticks);
  const phasemap::QGrid grid(15, 45, 100);
  const std::vector<double> x(100, 0.5);
  EXPECT_THROW(phasemap::brute_force_demix(x, lib, grid), std::invalid_argument);
}

TEST(Demix, RecoversEveryGeneratingSetWithoutNoise) {
  SynthSpec s;
  s.phases = 5;
  s.side = 6;
  s.fields = 8;
  s.noise = 0.0;
  s.alloy_fraction = 0.0;
  const auto b = phasemap::generate(s, 9);
  phasemap::DemixOptions opt;
  for (double w = s.sigma_low; w <= s.sigma_high + 1e-12; w += 0.025) opt.sigmas.push_back(w);
  const auto truth = b.truth.active_sets();
  for (std::size_t i = 0; i < b.dataset.n; ++i) {
    EXPECT_EQ(phasemap::brute_force_demix(b.dataset.pattern(i), b.library, b.dataset.grid, opt).phases, truth[i])
        << "point " << i;
  }
}
