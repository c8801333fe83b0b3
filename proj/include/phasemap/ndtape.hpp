#pragma once

// Minimal reverse-mode automatic differentiation over dense, row-major
// arrays of doubles. A Tape records every operation applied to its Vars;
// Tape::backward walks the records in reverse creation order and returns
// gradients for every named leaf.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phasemap::nd {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool is_scalar() const { return values_.size() == 1; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * shape_.back() + col]; }
  double& at(std::size_t row, std::size_t col) { return values_[row * shape_.back() + col]; }

  // Value of a single-element tensor.
  double item() const;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

bool operator==(const Tensor& a, const Tensor& b);

enum class OpKind {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  matmul,
  relu,
  sigmoid,
  softplus,
  tanh,
  exp,
  log,
  sqrt,
  softmax,
  sum,
  mean,
  concat,
  slice,
  scale,
  custom,
};

std::string_view op_name(OpKind kind);

using GradMap = std::map<std::string, Tensor>;

// Receives the gradient of the node output and accumulates into the
// (pre-zeroed, correctly shaped) gradients of each input.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor> input_grads)>;

class Tape;

// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Named differentiable leaf. Registering a name twice is an error.
  Var variable(std::string name, Tensor value);
  Var constant(Tensor value);

  // Escape hatch for fused kernels: the caller supplies the forward value
  // and the rule that scatters the output gradient into input gradients.
  Var custom(std::string_view name, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  // Gradients of a scalar root w.r.t. every named leaf. Leaves not reachable
  // from the root receive zero gradients. The tape is consumed: its nodes are
  // released and any later backward or op throws TapeError.
  GradMap backward(Var root);

  // When disabled, ops compute values only and record no backward rules.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Internal: used by the op functions.
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);
  const Tensor& value_of(std::size_t id) const;

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    std::string name;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
  };

  void check_live() const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
};

// Elementwise binary ops support matching shapes or a single-element operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var matmul(Var a, Var b);

Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var tanh(Var a);
Var exp(Var a);
// log(a + eps); throws DomainError if any a + eps <= 0.
Var log(Var a, double eps = 0.0);
// Square root with zero subgradient at 0.
Var sqrt(Var a);

// Reductions over one axis of a tensor; the reduced axis is removed.
Var softmax(Var a, std::size_t axis);
Var sum(Var a, std::size_t axis);
Var mean(Var a, std::size_t axis);
// Full reductions to a scalar.
Var sum(Var a);
Var mean(Var a);

Var concat(std::span<const Var> parts, std::size_t axis);
// Half-open range [begin, end) along axis.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var scale(Var a, double factor);
// a + c for a constant c.
Var shift(Var a, double offset);

// Named parameters with per-parameter Adam moments and a shared step count.
class ParamStore {
 public:
  struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get_mut(std::string_view name);
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  long step() const { return step_; }

  const Tensor& first_moment(std::string_view name) const;
  const Tensor& second_moment(std::string_view name) const;

  // One bias-corrected Adam update. Parameters absent from grads are left
  // untouched (values and moments).
  void adam_step(const GradMap& grads, const AdamOptions& options);

  // Versioned little-endian binary checkpoint of parameter values.
  void save(std::ostream& out) const;
  static ParamStore load(std::istream& in);
  void save(const std::string& path) const;
  static ParamStore load_file(const std::string& path);

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  struct Entry {
    Tensor value;
    Tensor m;
    Tensor v;
  };
  const Entry& entry(std::string_view name) const;

  std::map<std::string, Entry, std::less<>> entries_;
  long step_ = 0;
};

}  // namespace phasemap::nd
