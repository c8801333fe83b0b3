#pragma once

// Encoder: four independent fully-connected ReLU networks mapping a pattern
// to the interpretable latent state (activations, shifts, widths and per-peak
// amplitude factors). Output heads are bounded by construction.

#include "phasemap/decoder.hpp"
#include "phasemap/ndtape.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace phasemap {

struct EncoderConfig {
  std::size_t d = 0;  // input size
  std::size_t m = 0;  // phase count
  std::size_t k = kMaxPeaks;
  std::vector<std::size_t> hidden = {1024, 1024, 512};     // activation, shift and width heads
  std::vector<std::size_t> amp_hidden = {512, 512, 32};  // amplitude head
  LatentBounds bounds;

  void validate() const;
};

// Parameter names are "<head>.w<layer>" / "<head>.b<layer>".
inline constexpr std::array<const char*, 4> kHeadNames = {"activation", "shift", "width", "amplitude"};

using EncoderParams = nd::ParamStore;

// He-uniform hidden layers, zero biases; the activation head's output layer
// is Glorot-uniform and the three modification heads start at zero so the
// first decode reproduces unmodified prototypes.
EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed);

// Closed-form parameter count for a configuration.
std::size_t parameter_count(const EncoderConfig& cfg);

// Latent variables of a batch on a tape: P, alpha, sigma are [B, M]; amp [B, M*K].
struct LatentVars {
  nd::Var P;
  nd::Var alpha;
  nd::Var sigma;
  nd::Var amp;
};

using BoundParams = std::map<std::string, nd::Var, std::less<>>;

// Registers every parameter of the store as a tape variable.
BoundParams bind_params(nd::Tape& tape, const EncoderParams& params);

// Encodes a batch x [B, D] using parameters registered by bind_params.
LatentVars encode(nd::Var x, const BoundParams& params, const EncoderConfig& cfg);

// Forward-only encoding of a batch of patterns (rows of D values).
std::vector<LatentState> encode(std::span<const double> patterns, std::size_t batch, const EncoderParams& params,
                                const EncoderConfig& cfg);
LatentState encode_one(std::span<const double> x, const EncoderParams& params, const EncoderConfig& cfg);

}  // namespace phasemap
