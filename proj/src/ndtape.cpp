#include "phasemap/ndtape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace phasemap::nd {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Splits a shape around an axis into (outer, axis length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

void check_axis(std::string_view op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape));
  }
}

Tape& same_tape(std::string_view op, Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw TapeError(std::string(op) + ": operands belong to different tapes");
  }
  return a.tape();
}

enum class Broadcast { same, scalar_left, scalar_right };

Broadcast broadcast_rule(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  // Between two one-element operands the higher-rank shape wins.
  if (a.is_scalar() && b.is_scalar()) return a.rank() >= b.rank() ? Broadcast::scalar_right : Broadcast::scalar_left;
  if (a.is_scalar()) return Broadcast::scalar_left;
  if (b.is_scalar()) return Broadcast::scalar_right;
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Applies f elementwise under the broadcast rule; result takes the
// non-scalar operand's shape.
template <typename F>
Tensor elementwise(Broadcast rule, const Tensor& a, const Tensor& b, F f) {
  const Shape& shape = rule == Broadcast::scalar_left ? b.shape() : a.shape();
  Tensor out = Tensor::zeros(shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rule == Broadcast::scalar_left ? a[0] : a[i];
    const double y = rule == Broadcast::scalar_right ? b[0] : b[i];
    out[i] = f(x, y);
  }
  return out;
}

// Accumulates per-element partials into an input gradient honoring broadcasting.
void accumulate(Tensor& grad, bool is_broadcast_scalar, std::size_t i, double value) {
  if (is_broadcast_scalar) {
    grad[0] += value;
  } else {
    grad[i] += value;
  }
}

template <typename Forward, typename Partials>
Var binary(std::string_view name, OpKind kind, Var a, Var b, Forward forward, Partials partials) {
  Tape& tape = same_tape(name, a, b);
  const Broadcast rule = broadcast_rule(name, a.value(), b.value());
  Tensor out = elementwise(rule, a.value(), b.value(), forward);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  Tape* tp = &tape;
  return tape.record(kind, {a, b}, std::move(out),
                     [tp, ia, ib, rule, partials](const Tensor& g, std::span<Tensor> grads) {
                       const Tensor& av = tp->value_of(ia);
                       const Tensor& bv = tp->value_of(ib);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double x = rule == Broadcast::scalar_left ? av[0] : av[i];
                         const double y = rule == Broadcast::scalar_right ? bv[0] : bv[i];
                         const auto [dx, dy] = partials(x, y);
                         accumulate(grads[0], rule == Broadcast::scalar_left, i, g[i] * dx);
                         accumulate(grads[1], rule == Broadcast::scalar_right, i, g[i] * dy);
                       }
                     });
}

// Unary elementwise op; derivative(x, y) receives input x and output y.
template <typename Forward, typename Derivative>
Var unary(OpKind kind, Var a, Forward forward, Derivative derivative) {
  Tape& tape = a.tape();
  const Tensor& in = a.value();
  Tensor out = Tensor::zeros(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  const std::size_t ia = a.id();
  const std::size_t io = tape.size();
  Tape* tp = &tape;
  return tape.record(kind, {a}, std::move(out), [tp, ia, io, derivative](const Tensor& g, std::span<Tensor> grads) {
    const Tensor& x = tp->value_of(ia);
    const Tensor& y = tp->value_of(io);
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i] * derivative(x[i], y[i]);
  });
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (element_count(shape_) != values_.size()) {
    throw ShapeError("tensor: shape " + to_string(shape_) + " holds " + std::to_string(element_count(shape_)) +
                     " elements, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not a scalar");
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && a.data() == b.data(); }

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sqrt: return "sqrt";
    case OpKind::softmax: return "softmax";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::scale: return "scale";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}


// ---------------------------------------------------------------- Tape

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw TapeError("var: not attached to a tape");
  return tape_->value_of(id_);
}

void Tape::check_live() const {
  if (consumed_) throw TapeError("tape: already consumed by backward");
}

const Tensor& Tape::value_of(std::size_t id) const {
  check_live();
  return nodes_.at(id).value;
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  check_live();
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  if (grad_enabled_) {
    node.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (&v.tape() != this) throw TapeError(std::string(op_name(kind)) + ": input from another tape");
      node.inputs.push_back(v.id());
    }
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(std::string name, Tensor value) {
  check_live();
  if (leaves_.contains(name)) throw TapeError("tape: variable '" + name + "' registered twice");
  Var v = record(OpKind::leaf, {}, std::move(value), {});
  nodes_.back().name = name;
  leaves_.emplace(std::move(name), v.id());
  return v;
}

Var Tape::constant(Tensor value) { return record(OpKind::constant, {}, std::move(value), {}); }

Var Tape::custom(std::string_view name, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Var v = record(OpKind::custom, std::move(inputs), std::move(value), std::move(backward));
  nodes_.back().name = std::string(name);
  return v;
}

GradMap Tape::backward(Var root) {
  check_live();
  if (&root.tape() != this) throw TapeError("backward: root belongs to another tape");
  if (!grad_enabled_) throw TapeError("backward: gradients disabled on this tape");
  const Tensor& root_value = nodes_.at(root.id()).value;
  if (!root_value.is_scalar()) throw ShapeError("backward: root must be scalar, got shape " + to_string(root_value.shape()));

  std::vector<Tensor> grads(root.id() + 1);
  grads[root.id()] = Tensor::filled(root_value.shape(), 1.0);
  std::vector<Tensor> input_grads;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (grads[id].size() == 0 || !node.backward || node.inputs.empty()) continue;
    input_grads.clear();
    for (std::size_t in : node.inputs) input_grads.push_back(Tensor::zeros(nodes_[in].value.shape()));
    node.backward(grads[id], input_grads);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (grads[in].size() == 0) {
        grads[in] = std::move(input_grads[k]);
      } else {
        auto dst = grads[in].values();
        auto src = input_grads[k].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    // Intermediate gradients are no longer needed once propagated.
    if (node.kind != OpKind::leaf) grads[id] = Tensor();
  }

  GradMap out;
  for (const auto& [name, id] : leaves_) {
    if (id < grads.size() && grads[id].size() != 0) {
      out.emplace(name, std::move(grads[id]));
    } else {
      out.emplace(name, Tensor::zeros(nodes_[id].value.shape()));
    }
  }
  nodes_.clear();
  nodes_.shrink_to_fit();
  leaves_.clear();
  consumed_ = true;
  return out;
}

// ---------------------------------------------------------------- ops

Var add(Var a, Var b) {
  return binary("add", OpKind::add, a, b, [](double x, double y) { return x + y; },
                [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Var a, Var b) {
  return binary("sub", OpKind::sub, a, b, [](double x, double y) { return x - y; },
                [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Var a, Var b) {
  return binary("mul", OpKind::mul, a, b, [](double x, double y) { return x * y; },
                [](double x, double y) { return std::pair{y, x}; });
}

Var div(Var a, Var b) {
  const Tensor& den = b.value();
  for (std::size_t i = 0; i < den.size(); ++i) {
    if (den[i] == 0.0) throw DomainError("div: zero denominator at element " + std::to_string(i));
  }
  return binary("div", OpKind::div, a, b, [](double x, double y) { return x / y; },
                [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " x " + to_string(bv.shape()));
  }
  const std::size_t n = av.dim(0);
  const std::size_t k = av.dim(1);
  const std::size_t m = bv.dim(1);
  Tensor out = Tensor::zeros({n, m});
  MutMap(out.values().data(), n, m).noalias() = ConstMap(av.values().data(), n, k) * ConstMap(bv.values().data(), k, m);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  Tape* tp = &tape;
  return tape.record(OpKind::matmul, {a, b}, std::move(out),
                     [tp, ia, ib, n, k, m](const Tensor& g, std::span<Tensor> grads) {
                       const Tensor& av = tp->value_of(ia);
                       const Tensor& bv = tp->value_of(ib);
                       ConstMap G(g.values().data(), n, m);
                       MutMap(grads[0].values().data(), n, k).noalias() += G * ConstMap(bv.values().data(), k, m).transpose();
                       MutMap(grads[1].values().data(), k, m).noalias() += ConstMap(av.values().data(), n, k).transpose() * G;
                     });
}

Var relu(Var a) {
  return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(OpKind::sigmoid, a,
               [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(OpKind::softplus, a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) {
                 return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
               });
}

Var tanh(Var a) {
  return unary(OpKind::tanh, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a, double eps) {
  const Tensor& in = a.value();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!(in[i] + eps > 0.0)) {
      throw DomainError("log: non-positive operand " + std::to_string(in[i]) + " at element " + std::to_string(i));
    }
  }
  return unary(OpKind::log, a, [eps](double x) { return std::log(x + eps); },
               [eps](double x, double) { return 1.0 / (x + eps); });
}

Var sqrt(Var a) {
  const Tensor& in = a.value();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] < 0.0) throw DomainError("sqrt: negative operand at element " + std::to_string(i));
  }
  return unary(OpKind::sqrt, a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var softmax(Var a, std::size_t axis) {
  check_axis("softmax", a.shape(), axis);
  Tape& tape = a.tape();
  const Tensor& in = a.value();
  const AxisSplit s = split_axis(in.shape(), axis);
  Tensor out = Tensor::zeros(in.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t r = 0; r < s.inner; ++r) {
      const std::size_t base = o * s.length * s.inner + r;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.length; ++j) peak = std::max(peak, in[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.length; ++j) {
        const double e = std::exp(in[base + j * s.inner] - peak);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.length; ++j) out[base + j * s.inner] /= total;
    }
  }
  const std::size_t io = tape.size();
  Tape* tp = &tape;
  return tape.record(OpKind::softmax, {a}, std::move(out), [tp, io, s](const Tensor& g, std::span<Tensor> grads) {
    const Tensor& y = tp->value_of(io);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t r = 0; r < s.inner; ++r) {
        const std::size_t base = o * s.length * s.inner + r;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.length; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
        for (std::size_t j = 0; j < s.length; ++j) {
          const std::size_t i = base + j * s.inner;
          grads[0][i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

namespace {

Var reduce_axis(OpKind kind, Var a, std::size_t axis, double factor) {
  check_axis(op_name(kind), a.shape(), axis);
  Tape& tape = a.tape();
  const Tensor& in = a.value();
  const AxisSplit s = split_axis(in.shape(), axis);
  Tensor out = Tensor::zeros(drop_axis(in.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.length; ++j) {
      for (std::size_t r = 0; r < s.inner; ++r) out[o * s.inner + r] += in[(o * s.length + j) * s.inner + r];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return tape.record(kind, {a}, std::move(out), [s, factor](const Tensor& g, std::span<Tensor> grads) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.length; ++j) {
        for (std::size_t r = 0; r < s.inner; ++r) grads[0][(o * s.length + j) * s.inner + r] += factor * g[o * s.inner + r];
      }
    }
  });
}

Var reduce_all(OpKind kind, Var a, double factor) {
  Tape& tape = a.tape();
  const Tensor& in = a.value();
  double total = 0.0;
  for (double v : in.values()) total += v;
  return tape.record(kind, {a}, Tensor::scalar(total * factor), [factor](const Tensor& g, std::span<Tensor> grads) {
    const double d = g[0] * factor;
    for (double& v : grads[0].values()) v += d;
  });
}

}  // namespace

Var sum(Var a, std::size_t axis) { return reduce_axis(OpKind::sum, a, axis, 1.0); }

Var mean(Var a, std::size_t axis) {
  check_axis("mean", a.shape(), axis);
  return reduce_axis(OpKind::mean, a, axis, 1.0 / static_cast<double>(a.shape()[axis]));
}

Var sum(Var a) { return reduce_all(OpKind::sum, a, 1.0); }

Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
  return reduce_all(OpKind::mean, a, 1.0 / static_cast<double>(a.value().size()));
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  check_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lengths;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) throw TapeError("concat: inputs from different tapes");
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw ShapeError("concat: rank mismatch " + to_string(first) + " vs " + to_string(probe));
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (i != axis && probe[i] != first[i]) {
        throw ShapeError("concat: shape mismatch " + to_string(first) + " vs " + to_string(probe));
      }
    }
    lengths.push_back(probe[axis]);
    out_shape[axis] += probe[axis];
  }
  const AxisSplit s = split_axis(out_shape, axis);
  Tensor out = Tensor::zeros(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& in = parts[p].value();
    const std::size_t len = lengths[p];
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(in.values().begin() + static_cast<std::ptrdiff_t>(o * len * s.inner), len * s.inner,
                  out.values().begin() + static_cast<std::ptrdiff_t>((o * s.length + offset) * s.inner));
    }
    offset += len;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(OpKind::concat, std::move(inputs), std::move(out),
                     [s, lengths](const Tensor& g, std::span<Tensor> grads) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < lengths.size(); ++p) {
                         const std::size_t len = lengths[p];
                         for (std::size_t o = 0; o < s.outer; ++o) {
                           for (std::size_t i = 0; i < len * s.inner; ++i) {
                             grads[p][o * len * s.inner + i] += g[(o * s.length + offset) * s.inner + i];
                           }
                         }
                         offset += len;
                       }
                     });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis("slice", a.shape(), axis);
  const Shape& shape = a.shape();
  if (begin > end || end > shape[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                     to_string(shape));
  }
  Tape& tape = a.tape();
  const AxisSplit s = split_axis(shape, axis);
  Shape out_shape = shape;
  out_shape[axis] = end - begin;
  const std::size_t len = end - begin;
  Tensor out = Tensor::zeros(out_shape);
  const Tensor& in = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in.values().begin() + static_cast<std::ptrdiff_t>((o * s.length + begin) * s.inner), len * s.inner,
                out.values().begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
  }
  return tape.record(OpKind::slice, {a}, std::move(out), [s, begin, len](const Tensor& g, std::span<Tensor> grads) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < len * s.inner; ++i) grads[0][(o * s.length + begin) * s.inner + i] += g[o * len * s.inner + i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(OpKind::scale, a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var shift(Var a, double offset) {
  return add(a, a.tape().constant(Tensor::scalar(offset)));
}

// ---------------------------------------------------------------- ParamStore

namespace {

constexpr char kMagic[4] = {'P', 'M', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated stream");
  return value;
}

}  // namespace

void ParamStore::add(std::string name, Tensor value) {
  if (entries_.contains(name)) throw std::invalid_argument("param store: duplicate parameter '" + name + "'");
  Entry e;
  e.m = Tensor::zeros(value.shape());
  e.v = Tensor::zeros(value.shape());
  e.value = std::move(value);
  entries_.emplace(std::move(name), std::move(e));
}

bool ParamStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("param store: unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParamStore::get(std::string_view name) const { return entry(name).value; }

Tensor& ParamStore::get_mut(std::string_view name) { return const_cast<Entry&>(entry(name)).value; }

const Tensor& ParamStore::first_moment(std::string_view name) const { return entry(name).m; }
const Tensor& ParamStore::second_moment(std::string_view name) const { return entry(name).v; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::adam_step(const GradMap& grads, const AdamOptions& options) {
  if (!(options.lr >= 0.0)) throw std::invalid_argument("adam: learning rate must be non-negative");
  for (const auto& [name, g] : grads) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("adam: gradient for unknown parameter '" + name + "'");
    if (it->second.value.shape() != g.shape()) {
      throw ShapeError("adam: gradient shape " + to_string(g.shape()) + " does not match parameter '" + name + "' " +
                       to_string(it->second.value.shape()));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (const auto& [name, g] : grads) {
    Entry& e = entries_.find(name)->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      e.m[i] = options.beta1 * e.m[i] + (1.0 - options.beta1) * g[i];
      e.v[i] = options.beta2 * e.v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = e.m[i] / c1;
      const double v_hat = e.v[i] / c2;
      e.value[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

void ParamStore::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, entries_.size());
  for (const auto& [name, e] : entries_) {
    write_le<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint64_t>(out, e.value.rank());
    for (std::size_t d : e.value.shape()) write_le<std::uint64_t>(out, d);
    for (double v : e.value.values()) write_le<double>(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

ParamStore ParamStore::load(std::istream& in) {
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 4, kMagic)) throw std::runtime_error("checkpoint: bad magic");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  ParamStore store;
  const auto count = read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint64_t>(in);
    if (len > (1u << 20)) throw std::runtime_error("checkpoint: implausible name length");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    const auto rank = read_le<std::uint64_t>(in);
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = read_le<std::uint64_t>(in);
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = read_le<double>(in);
    store.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  save(out);
}

ParamStore ParamStore::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return load(in);
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (const auto& [name, e] : a.entries_) {
    auto it = b.entries_.find(name);
    if (it == b.entries_.end() || !(it->second.value == e.value)) return false;
  }
  return true;
}

}  // namespace phasemap::nd
