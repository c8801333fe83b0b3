#include "phasemap/relax.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

namespace nd = phasemap::nd;
namespace relax = phasemap::relax;

namespace {

std::vector<double> one_hot(std::size_t m, std::size_t j) {
  std::vector<double> p(m, 0.0);
  p[j] = 1.0;
  return p;
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t m, std::size_t support) {
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(m, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < support; ++i) total += p[idx[i]] = e(rng);
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

TEST(Entropy, HandExamples) {
  EXPECT_NEAR(relax::entropy(std::vector<double>{1.0, 0.0, 0.0}), 0.0, 1e-10);
  EXPECT_NEAR(relax::entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-10);
  EXPECT_NEAR(relax::entropy(std::vector<double>(5, 0.2)), std::log(5.0), 1e-10);
  EXPECT_NEAR(relax::entropy(std::vector<double>{0.7, 0.2, 0.1}),
              -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1)), 1e-10);
}

TEST(Entropy, BoundedByLogOfSupport) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + trial % 7;
    const std::size_t k = 1 + trial % m;
    const auto p = random_distribution(rng, m, k);
    const double h = relax::entropy(p);
    EXPECT_GE(h, -1e-10);
    EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-10);
    if (k > 1) {
      EXPECT_EQ(relax::ksparsity_penalty(p, std::log(static_cast<double>(k))), 0.0);
    }
  }
}

TEST(Entropy, RejectsInvalidDistributions) {
  EXPECT_THROW(relax::entropy(std::vector<double>{0.6, 0.6}), std::invalid_argument);
  EXPECT_THROW(relax::entropy(std::vector<double>{1.1, -0.1}), std::invalid_argument);
}

TEST(Cardinality, GradientFavoursTheDominantPhase) {
  nd::Tape t;
  const auto p = t.variable("p", nd::Tensor::matrix(1, 2, {0.6, 0.4}));
  const auto g = t.backward(nd::sum(relax::entropy(p))).at("p");
  // Tangent direction along the simplex: moving mass to the larger entry lowers the penalty.
  EXPECT_LT(g[0] - g[1], 0.0);
  EXPECT_NEAR(g[0] - g[1], std::log(0.4) - std::log(0.6), 1e-9);
  EXPECT_NEAR(relax::cardinality_penalty(std::vector<double>{0.6, 0.4}), relax::entropy(std::vector<double>{0.6, 0.4}), 0.0);
}

TEST(KSparsity, UniformExamples) {
  const double ln3 = std::log(3.0);
  EXPECT_NEAR(relax::ksparsity_penalty(std::vector<double>(3, 1.0 / 3.0), ln3), 0.0, 1e-10);
  EXPECT_NEAR(relax::ksparsity_penalty(std::vector<double>(4, 0.25), ln3), std::log(4.0) - ln3, 1e-10);
  EXPECT_THROW(relax::ksparsity_penalty(std::vector<double>{1.0}, 0.0), std::invalid_argument);
}

TEST(KSparsity, TapeVersionMatchesPlain) {
  std::mt19937_64 rng(2);
  std::vector<double> flat;
  std::vector<double> c = {0.2, 0.7, 1.2};
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 3; ++r) {
    rows.push_back(random_distribution(rng, 4, 4));
    flat.insert(flat.end(), rows.back().begin(), rows.back().end());
  }
  nd::Tape t;
  const auto v = relax::ksparsity_penalty(t.constant(nd::Tensor::matrix(3, 4, flat)), nd::Tensor::vector(c));
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(v.value()[r], relax::ksparsity_penalty(rows[r], c[r]), 1e-12);
  EXPECT_THROW(relax::ksparsity_penalty(t.constant(nd::Tensor::matrix(3, 4, flat)), nd::Tensor::vector({1.0})),
               nd::ShapeError);
}

// All 4^4 one-hot assignments of four variables over four symbols. The
// penalty is ln 4 minus the entropy of the symbol histogram.
TEST(AllDifferent, ExhaustiveOneHotEnumeration) {
  int zero_cases = 0;
  for (int code = 0; code < 256; ++code) {
    std::vector<std::vector<double>> ps;
    std::array<int, 4> counts{};
    std::vector<double> flat;
    for (int v = 0; v < 4; ++v) {
      const int sym = (code >> (2 * v)) & 3;
      ++counts[sym];
      ps.push_back(one_hot(4, sym));
      flat.insert(flat.end(), ps.back().begin(), ps.back().end());
    }
    double hist_entropy = 0.0;
    for (int c : counts) {
      if (c > 0) hist_entropy -= (c / 4.0) * std::log(c / 4.0);
    }
    const double expected = std::log(4.0) - hist_entropy;
    const double plain = relax::alldiff_penalty(ps);
    EXPECT_NEAR(plain, expected, 1e-10) << "code " << code;
    nd::Tape t;
    EXPECT_NEAR(relax::alldiff_penalty(t.constant(nd::Tensor::matrix(4, 4, flat))).value().item(), expected, 1e-10);
    const bool distinct = counts[0] == 1 && counts[1] == 1 && counts[2] == 1 && counts[3] == 1;
    EXPECT_EQ(std::abs(plain) < 1e-10, distinct) << "code " << code;
    zero_cases += distinct ? 1 : 0;
  }
  EXPECT_EQ(zero_cases, 24);
}

TEST(AllDifferent, SoftExamples) {
  const std::vector<std::vector<double>> same = {{1, 0}, {1, 0}};
  const std::vector<std::vector<double>> diffuse = {{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_NEAR(relax::alldiff_penalty(same), std::log(2.0), 1e-10);
  EXPECT_NEAR(relax::alldiff_penalty(diffuse), std::log(2.0), 1e-10);
  const std::vector<std::vector<double>> too_many = {{1, 0}, {0, 1}, {1, 0}};
  EXPECT_THROW(relax::alldiff_penalty(too_many), std::invalid_argument);
}

TEST(AllDifferent, NonNegativeOnRandomDistributions) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<double>> ps;
    const std::size_t s = 1 + trial % 5;
    for (std::size_t i = 0; i < s; ++i) ps.push_back(random_distribution(rng, 5, 1 + (trial + i) % 5));
    EXPECT_GE(relax::alldiff_penalty(ps), -1e-10);
  }
}

TEST(Connectivity, DistanceExamples) {
  const std::vector<double> a = {1, 0, 0}, b = {0, 1, 0};
  EXPECT_NEAR(relax::connectivity_penalty(a, b), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(relax::connectivity_penalty(a, b), relax::connectivity_penalty(b, a));
  EXPECT_EQ(relax::connectivity_penalty(a, a), 0.0);
  nd::Tape t;
  const auto v = relax::connectivity_penalty(t.constant(nd::Tensor::matrix(1, 3, a)), t.constant(nd::Tensor::matrix(1, 3, b)));
  EXPECT_NEAR(v.value()[0], std::sqrt(2.0), 1e-15);
}

TEST(Alloying, StrictThreshold) {
  const std::vector<double> u = {1.0, 1.0, 0.99};
  const std::vector<double> v = {1.002, 1.001, 0.99};
  const std::vector<std::size_t> shared = {0, 1, 2};
  const auto flags = relax::detect_alloying(u, v, shared, 0.0015);
  EXPECT_EQ(flags, (std::vector<bool>{true, false, false}));
  EXPECT_EQ(relax::detect_alloying(u, v, shared), relax::detect_alloying(v, u, shared));
  const std::vector<double> a = {1.0}, b = {1.002}, c = {1.0005};
  const std::vector<std::size_t> one = {0};
  EXPECT_TRUE(relax::detect_alloying(a, b, one)[0]);
  EXPECT_FALSE(relax::detect_alloying(a, c, one)[0]);
  // Exact threshold differences are not flagged; 0.5 and 0.25 are representable.
  const std::vector<double> x = {0.5}, y = {0.75};
  EXPECT_FALSE(relax::detect_alloying(x, y, one, 0.25)[0]);
}

TEST(ActiveCount, StrictCutoff) {
  EXPECT_EQ(relax::active_count(std::vector<double>{0.98, 0.01, 0.01}), 1u);
  EXPECT_EQ(relax::active_count(std::vector<double>{0.5, 0.3, 0.2}), 3u);
}

TEST(ConstraintTerm, Validation) {
  relax::ConstraintTerm t;
  t.scope = {0};
  t.weight = 1.0;
  EXPECT_NO_THROW(t.validate(3));
  t.weight = -1.0;
  EXPECT_THROW(t.validate(3), std::invalid_argument);
  t.weight = 1.0;
  t.scope.clear();
  EXPECT_THROW(t.validate(3), std::invalid_argument);
  t.scope = {0};
  t.kind = relax::ConstraintKind::ksparsity;
  t.threshold = std::log(3.0);
  EXPECT_NO_THROW(t.validate(3));
  t.threshold = std::log(4.0);
  EXPECT_THROW(t.validate(3), std::invalid_argument);
  t.threshold = 0.0;
  EXPECT_THROW(t.validate(3), std::invalid_argument);
}
