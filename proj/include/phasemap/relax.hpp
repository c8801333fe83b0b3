#pragma once

// Entropy-based continuous relaxations of discrete constraints on
// probability-vector latents. Plain versions operate on spans; tape versions
// operate row-wise on [B, M] batches.

#include "phasemap/ndtape.hpp"

#include <span>
#include <vector>

namespace phasemap::relax {

inline constexpr double kLogGuard = 1e-12;
inline constexpr double kActiveEpsilon = 0.01;
inline constexpr double kAlloyThreshold = 0.001;

enum class ConstraintKind { cardinality, ksparsity, alldifferent, alloy_gate, connectivity };

struct ConstraintTerm {
  ConstraintKind kind = ConstraintKind::cardinality;
  std::vector<std::size_t> scope;  // data-point indices
  double weight = 0.0;
  double threshold = 0.0;  // k-sparsity only

  // Throws std::invalid_argument; phases is the distribution length.
  void validate(std::size_t phases) const;
};

// H(p) = -sum p_i ln(p_i + 1e-12). Throws std::invalid_argument for entries
// below -1e-9 or a total outside 1 +- 1e-6.
double entropy(std::span<const double> p);
double cardinality_penalty(std::span<const double> p);
// max(0, H(p) - c)
double ksparsity_penalty(std::span<const double> p, double c);
// (ln|S| - H(mean)) + mean_i H(p_i)
double alldiff_penalty(std::span<const std::vector<double>> ps);
// ||p_u - p_v||_2
double connectivity_penalty(std::span<const double> pu, std::span<const double> pv);

// Number of entries strictly above eps.
std::size_t active_count(std::span<const double> p, double eps = kActiveEpsilon);

// Phases j among `shared` whose shift ratios differ by more than the
// threshold (strict inequality).
std::vector<bool> detect_alloying(std::span<const double> alpha_u, std::span<const double> alpha_v,
                                  std::span<const std::size_t> shared, double threshold = kAlloyThreshold);

// Row-wise tape versions on P [B, M]; each returns [B].
nd::Var entropy(nd::Var P);
nd::Var ksparsity_penalty(nd::Var P, const nd::Tensor& thresholds);
nd::Var connectivity_penalty(nd::Var Pu, nd::Var Pv);
// Scalar penalty over all rows of ps [S, M].
nd::Var alldiff_penalty(nd::Var ps);

}  // namespace phasemap::relax
