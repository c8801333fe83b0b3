#include "phasemap/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace phasemap {

void EncoderConfig::validate() const {
  if (d < 1 || m < 1 || k < 1) throw std::invalid_argument("encoder config: d, m and k must be >= 1");
  if (hidden.size() != 3 || amp_hidden.size() != 3) throw std::invalid_argument("encoder config: each head has 3 hidden layers");
  for (std::size_t h : hidden) {
    if (h < 1) throw std::invalid_argument("encoder config: hidden sizes must be >= 1");
  }
  for (std::size_t h : amp_hidden) {
    if (h < 1) throw std::invalid_argument("encoder config: hidden sizes must be >= 1");
  }
  bounds.validate();
}

namespace {

std::vector<std::size_t> layer_sizes(const EncoderConfig& cfg, std::size_t head) {
  const auto& hidden = head == 3 ? cfg.amp_hidden : cfg.hidden;
  const std::size_t out = head == 3 ? cfg.m * cfg.k : cfg.m;
  return {cfg.d, hidden[0], hidden[1], hidden[2], out};
}

std::string weight_name(std::size_t head, std::size_t layer) {
  return std::string(kHeadNames[head]) + ".w" + std::to_string(layer);
}

std::string bias_name(std::size_t head, std::size_t layer) {
  return std::string(kHeadNames[head]) + ".b" + std::to_string(layer);
}

}  // namespace

std::size_t parameter_count(const EncoderConfig& cfg) {
  std::size_t n = 0;
  for (std::size_t head = 0; head < 4; ++head) {
    const auto sizes = layer_sizes(cfg, head);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  }
  return n;
}

EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  EncoderParams store;
  for (std::size_t head = 0; head < 4; ++head) {
    const auto sizes = layer_sizes(cfg, head);
    const std::size_t layers = sizes.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t fan_in = sizes[l];
      const std::size_t fan_out = sizes[l + 1];
      nd::Tensor w = nd::Tensor::zeros({fan_in, fan_out});
      const bool output = l + 1 == layers;
      if (!output || head == 0) {
        const double limit = output ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out))
                                    : std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& v : w.values()) v = dist(rng);
      }
      store.add(weight_name(head, l), std::move(w));
      store.add(bias_name(head, l), nd::Tensor::zeros({1, fan_out}));
    }
  }
  return store;
}

BoundParams bind_params(nd::Tape& tape, const EncoderParams& params) {
  BoundParams out;
  for (const std::string& name : params.names()) out.emplace(name, tape.variable(name, params.get(name)));
  return out;
}

namespace {

const nd::Var& lookup(const BoundParams& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("encoder: missing parameter '" + name + "'");
  return it->second;
}

nd::Var run_head(nd::Var x, const BoundParams& params, std::size_t head, nd::Var ones) {
  nd::Var h = x;
  for (std::size_t l = 0; l < 4; ++l) {
    h = nd::add(nd::matmul(h, lookup(params, weight_name(head, l))), nd::matmul(ones, lookup(params, bias_name(head, l))));
    if (l < 3) h = nd::relu(h);
  }
  if (!h.value().all_finite()) throw std::runtime_error(std::string("encoder: non-finite activations in head '") + kHeadNames[head] + "'");
  return h;
}

}  // namespace

LatentVars encode(nd::Var x, const BoundParams& params, const EncoderConfig& cfg) {
  const nd::Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != cfg.d) {
    throw nd::ShapeError("encode: input must be [B," + std::to_string(cfg.d) + "], got " + nd::to_string(xv.shape()));
  }
  if (!xv.all_finite()) throw std::invalid_argument("encode: non-finite input");
  const std::size_t batch = xv.dim(0);
  nd::Tape& tape = x.tape();
  nd::Var ones = tape.constant(nd::Tensor::filled({batch, 1}, 1.0));
  const LatentBounds& b = cfg.bounds;
  LatentVars out;
  out.P = nd::softmax(run_head(x, params, 0, ones), 1);
  out.alpha = nd::shift(nd::scale(nd::tanh(run_head(x, params, 1, ones)), b.s_max), 1.0);
  out.sigma = nd::shift(nd::scale(nd::sigmoid(run_head(x, params, 2, ones)), b.sigma_max - b.sigma_min), b.sigma_min);
  out.amp = nd::shift(nd::scale(nd::sigmoid(run_head(x, params, 3, ones)), b.b_max - b.b_min), b.b_min);
  return out;
}

std::vector<LatentState> encode(std::span<const double> patterns, std::size_t batch, const EncoderParams& params,
                                const EncoderConfig& cfg) {
  if (patterns.size() != batch * cfg.d) throw std::invalid_argument("encode: pattern buffer size mismatch");
  nd::Tape tape;
  tape.set_grad_enabled(false);
  BoundParams bound = bind_params(tape, params);
  nd::Var x = tape.constant(nd::Tensor({batch, cfg.d}, std::vector<double>(patterns.begin(), patterns.end())));
  LatentVars lv = encode(x, bound, cfg);
  std::vector<LatentState> out(batch);
  const std::size_t m = cfg.m;
  for (std::size_t i = 0; i < batch; ++i) {
    LatentState& s = out[i];
    s.k = cfg.k;
    auto row = [&](const nd::Var& v, std::size_t width) {
      auto vals = v.value().values().subspan(i * width, width);
      return std::vector<double>(vals.begin(), vals.end());
    };
    s.P = row(lv.P, m);
    s.alpha = row(lv.alpha, m);
    s.sigma = row(lv.sigma, m);
    s.amp = row(lv.amp, m * cfg.k);
  }
  return out;
}

LatentState encode_one(std::span<const double> x, const EncoderParams& params, const EncoderConfig& cfg) {
  return encode(x, 1, params, cfg).front();
}

}  // namespace phasemap
