#pragma once

// Gaussian-mixture generative decoder. Each prototype is rendered as a sum of
// Gaussians whose centers are multiplicatively shifted, then phases are mixed
// by their activation probabilities. Tape variants carry fused backward rules.

#include "phasemap/domain.hpp"
#include "phasemap/ndtape.hpp"

#include <span>
#include <vector>

namespace phasemap {

inline constexpr double kRenderWindowSigmas = 4.0;
inline constexpr double kJsWeight = 20.0;
inline constexpr double kL2Weight = 0.05;
inline constexpr double kJsEpsilon = 1e-9;

// Prior bounds on how far a prototype may be modified.
struct LatentBounds {
  double s_max = 0.05;  // alpha in [1 - s_max, 1 + s_max]
  double sigma_min = 0.05;
  double sigma_max = 0.5;
  double b_min = 0.5;
  double b_max = 2.0;

  double sigma_mid() const { return 0.5 * (sigma_min + sigma_max); }
  double b_mid() const { return 0.5 * (b_min + b_max); }
  void validate() const;
};

// Interpretable latent of one data point: M activations, shifts, widths
// and an M x K matrix of per-peak amplitude factors.
struct LatentState {
  std::vector<double> P;
  std::vector<double> alpha;
  std::vector<double> sigma;
  std::vector<double> amp;  // row j holds the K factors of phase j
  std::size_t k = 0;

  std::size_t phases() const { return P.size(); }
  std::span<const double> amp_row(std::size_t j) const { return std::span<const double>(amp).subspan(j * k, k); }
  void validate(const LatentBounds& bounds) const;
};

struct PhaseRender {
  std::vector<double> values;  // max-normalized, D entries
  bool in_range = true;        // false when every shifted peak falls off the grid
};

// pattern(q) = sum_k amp_k a_k exp(-(q - alpha q_k)^2 / (2 sigma^2)), truncated
// at 4 sigma and max-normalized. amp may be longer than the peak list.
PhaseRender render_phase(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp,
                         const QGrid& grid);

// Render before normalization.
std::vector<double> render_phase_raw(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp,
                                     const QGrid& grid);

// Render plus the D x (2 + npeaks) row-major Jacobian of the normalized
// pattern w.r.t. (alpha, sigma, amp_0, ..., amp_{npeaks-1}).
PhaseRender render_phase_jacobian(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp,
                                  const QGrid& grid, std::vector<double>& jacobian);

// sum_j P_j render_j, max-normalized.
std::vector<double> mix(std::span<const std::vector<double>> renders, std::span<const double> P);

// Jensen-Shannon distance (natural log) between area-normalized copies of
// two non-negative patterns; eps is added to every bin before normalizing.
double js_distance(std::span<const double> a, std::span<const double> b, double eps = kJsEpsilon);

struct ReconstructionTerms {
  double js = 0.0;
  double l2 = 0.0;
  double total = 0.0;  // kJsWeight * js + kL2Weight * l2
};

// Throws std::domain_error for an all-zero pattern.
ReconstructionTerms reconstruction_loss(std::span<const double> xhat, std::span<const double> x);

// Renders every phase of every point in a batch: alpha, sigma are [B, M],
// amp is [B, M*K]. Returns [B, M*D].
nd::Var render_phases(nd::Var alpha, nd::Var sigma, nd::Var amp, const PrototypeLibrary& lib, const QGrid& grid,
                      std::size_t k, unsigned workers = 1);

// P is [B, M], renders [B, M*D]; returns max-normalized mixtures [B, D].
nd::Var mix(nd::Var P, nd::Var renders);

// Per-point reconstruction loss [B] against fixed targets x [B, D].
nd::Var reconstruction_loss(nd::Var xhat, const nd::Tensor& x);

}  // namespace phasemap
