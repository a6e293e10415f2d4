#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace muse {

// Dense row-major 64-bit matrix; vectors are (n x 1) or (1 x n).
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_string(const Tensor& t);

// Throws DomainError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& t, std::string_view what);

/************ parameter storage ****************************/

// A trainable tensor with its gradient and Adam state. All four tensors share
// one shape.
struct ParamEntry {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  std::int64_t step = 0;
};

class ParamStore {
 public:
  // Registers a new parameter with zero gradient and zero moments.
  ParamEntry& add(const std::string& name, Tensor value);
  // Inserts a fully specified entry (used when restoring checkpoints).
  ParamEntry& restore(const std::string& name, ParamEntry entry);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }

  void zero_grad();
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_scalars() const;

  // Iteration is in name order, which fixes checkpoint and update order.
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, ParamEntry> entries_;
};

/************ tape *****************************************/

enum class OpKind {
  constant,
  parameter,
  matmul,
  transpose,
  add,
  sub,
  concat_cols,
  concat_rows,
  slice,
  reshape,
  gather_rows,
  reduce_sum,
  scale,
  squared_l2_distance,
  leaky_relu,
  tanh,
  sigmoid,
  softmax,
  log,
  clamp,
  custom,
};

const char* to_string(OpKind kind);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  // Zero-sized until backward() has reached this node.
  const Tensor& adjoint() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape& tape() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// What a backward rule sees: its own forward value and adjoint, its inputs'
// values, and the inputs' adjoint accumulators (zero-initialized on demand).
class BackwardContext {
 public:
  const Tensor& value() const;
  const Tensor& adjoint() const;
  const Tensor& input(std::size_t k) const;
  Tensor& input_adjoint(std::size_t k);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}
  Tape& tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // A leaf whose adjoint is added to store[name].grad by backward().
  // Binding the same parameter twice yields two leaves; both accumulate.
  Var parameter(ParamStore& store, const std::string& name);

  // Appends an op node. Inputs must live on this tape; `value` must be finite.
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  // Propagates from a (1 x 1) root in reverse creation order and accumulates
  // into bound parameter gradients. Gradients are not zeroed here.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;
  friend class BackwardContext;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor adjoint;
    BackwardFn backward;
    Tensor* grad_sink = nullptr;
  };

  Tensor& adjoint_of(std::size_t index);
  std::vector<Node> nodes_;
};

/************ primitives ***********************************/

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

// [a | b]; for facet-major row vectors this is concatenation along the facet axis.
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice(Var a, Index row, Index rows, Index col, Index cols);
// Row-major reinterpretation, e.g. (n x M*D) -> (n*M x D).
Var reshape(Var a, Index rows, Index cols);
Var gather_rows(Var a, std::span<const Index> rows);

Var reduce_sum(Var a);
Var scale(Var a, double factor);
// sum((a - b)^2) as a (1 x 1) node.
Var squared_l2_distance(Var a, Var b);

Var leaky_relu(Var a, double slope);
Var tanh(Var a);
Var sigmoid(Var a);
// Over all entries of a row or column vector, max-shifted.
Var softmax(Var a);
Var log(Var a);
// Entries are limited to [lo, hi]; the gradient passes only where unclamped.
Var clamp(Var a, double lo, double hi);

// Scalar helpers shared with the plain evaluation paths.
inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
double stable_sigmoid(double x);

}  // namespace muse
