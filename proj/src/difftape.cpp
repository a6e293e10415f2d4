#include "muse/difftape.hpp"

#include <cmath>
#include <sstream>

#include "muse/errors.hpp"

namespace muse {

std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + " x " + std::to_string(t.cols()) + ")";
}

void require_finite(const Tensor& t, std::string_view what) {
  if (!t.allFinite()) throw DomainError("non-finite value in " + std::string(what));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/************ ParamStore ***********************************/

ParamEntry& ParamStore::add(const std::string& name, Tensor value) {
  require_finite(value, "parameter '" + name + "'");
  ParamEntry entry;
  entry.grad = Tensor::Zero(value.rows(), value.cols());
  entry.m = entry.grad;
  entry.v = entry.grad;
  entry.value = std::move(value);
  return restore(name, std::move(entry));
}

ParamEntry& ParamStore::restore(const std::string& name, ParamEntry entry) {
  const auto& v = entry.value;
  for (const Tensor* t : {&entry.grad, &entry.m, &entry.v})
    if (t->rows() != v.rows() || t->cols() != v.cols())
      throw DimensionError("parameter '" + name + "' state " + shape_string(*t) +
                           " does not match value " + shape_string(v));
  if (entry.step < 0) throw ContractError("parameter '" + name + "' has negative step count");
  auto [it, inserted] = entries_.emplace(name, std::move(entry));
  if (!inserted) throw ContractError("parameter '" + name + "' already registered");
  return it->second;
}

ParamEntry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.setZero();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

/************ Tape *****************************************/

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::slice: return "slice";
    case OpKind::reshape: return "reshape";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::scale: return "scale";
    case OpKind::squared_l2_distance: return "squared_l2_distance";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax: return "softmax";
    case OpKind::log: return "log";
    case OpKind::clamp: return "clamp";
    case OpKind::custom: return "custom";
  }
  return "?";
}

const Tensor& Var::value() const { return tape().nodes_[index_].value; }
const Tensor& Var::adjoint() const { return tape().nodes_[index_].adjoint; }

Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

const Tensor& BackwardContext::value() const { return tape_.nodes_[node_].value; }
const Tensor& BackwardContext::adjoint() const { return tape_.nodes_[node_].adjoint; }
const Tensor& BackwardContext::input(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(k)].value;
}
Tensor& BackwardContext::input_adjoint(std::size_t k) {
  return tape_.adjoint_of(tape_.nodes_[node_].inputs.at(k));
}

Tensor& Tape::adjoint_of(std::size_t index) {
  auto& node = nodes_[index];
  if (node.adjoint.size() == 0 && node.value.size() != 0)
    node.adjoint = Tensor::Zero(node.value.rows(), node.value.cols());
  return node.adjoint;
}

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back({OpKind::constant, {}, std::move(value), {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParamStore& store, const std::string& name) {
  auto& entry = store.at(name);
  nodes_.push_back({OpKind::parameter, {}, entry.value, {}, {}, &entry.grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (v.tape_ != this) throw ContractError(std::string(to_string(kind)) + ": input from another tape");
    ids.push_back(v.index_);
  }
  require_finite(value, to_string(kind));
  nodes_.push_back({kind, std::move(ids), std::move(value), {}, std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ContractError("backward: root from another tape");
  const auto& rv = nodes_[root.index_].value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw ContractError("backward: root must be scalar, got " + shape_string(rv));

  for (auto& node : nodes_) node.adjoint.resize(0, 0);
  nodes_[root.index_].adjoint = Tensor::Ones(1, 1);

  for (std::size_t k = root.index_ + 1; k-- > 0;) {
    auto& node = nodes_[k];
    if (node.adjoint.size() == 0) continue;
    if (node.grad_sink) {
      *node.grad_sink += node.adjoint;
    } else if (node.backward) {
      BackwardContext ctx(*this, k);
      node.backward(ctx);
    }
  }
}

/************ primitives ***********************************/

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
  return a.tape();
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

}  // namespace

Var matmul(Var a, Var b) {
  auto& tape = same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) shape_mismatch("matmul", a.value(), b.value());
  Tensor out = a.value() * b.value();
  return tape.record(OpKind::matmul, {a, b}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0).noalias() += c.adjoint() * c.input(1).transpose();
    c.input_adjoint(1).noalias() += c.input(0).transpose() * c.adjoint();
  });
}

Var transpose(Var a) {
  Tensor out = a.value().transpose();
  return a.tape().record(OpKind::transpose, {a}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0) += c.adjoint().transpose();
  });
}

Var add(Var a, Var b) {
  auto& tape = same_tape(a, b, "add");
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value() + b.value();
  return tape.record(OpKind::add, {a, b}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0) += c.adjoint();
    c.input_adjoint(1) += c.adjoint();
  });
}

Var sub(Var a, Var b) {
  auto& tape = same_tape(a, b, "sub");
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value() - b.value();
  return tape.record(OpKind::sub, {a, b}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0) += c.adjoint();
    c.input_adjoint(1) -= c.adjoint();
  });
}

Var concat_cols(Var a, Var b) {
  auto& tape = same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows()) shape_mismatch("concat_cols", a.value(), b.value());
  Tensor out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index split = a.cols();
  return tape.record(OpKind::concat_cols, {a, b}, std::move(out), [split](BackwardContext& c) {
    const auto& g = c.adjoint();
    c.input_adjoint(0) += g.leftCols(split);
    c.input_adjoint(1) += g.rightCols(g.cols() - split);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  auto& tape = parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (&p.tape() != &tape) throw ContractError("concat_rows: operands on different tapes");
    if (p.cols() != cols) shape_mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<Index> starts;
  Index r = 0;
  for (const auto& p : parts) {
    starts.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(OpKind::concat_rows, std::move(inputs), std::move(out),
                     [starts](BackwardContext& c) {
                       for (std::size_t k = 0; k < starts.size(); ++k) {
                         auto& g = c.input_adjoint(k);
                         g += c.adjoint().middleRows(starts[k], g.rows());
                       }
                     });
}

Var slice(Var a, Index row, Index rows, Index col, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols())
    throw DimensionError("slice: block at (" + std::to_string(row) + ", " + std::to_string(col) +
                         ") of size (" + std::to_string(rows) + " x " + std::to_string(cols) +
                         ") outside " + shape_string(a.value()));
  Tensor out = a.value().block(row, col, rows, cols);
  return a.tape().record(OpKind::slice, {a}, std::move(out), [=](BackwardContext& c) {
    c.input_adjoint(0).block(row, col, rows, cols) += c.adjoint();
  });
}

Var reshape(Var a, Index rows, Index cols) {
  if (rows * cols != a.value().size())
    throw DimensionError("reshape: cannot view " + shape_string(a.value()) + " as (" +
                         std::to_string(rows) + " x " + std::to_string(cols) + ")");
  Tensor out = Eigen::Map<const Tensor>(a.value().data(), rows, cols);
  return a.tape().record(OpKind::reshape, {a}, std::move(out), [](BackwardContext& c) {
    auto& g = c.input_adjoint(0);
    g += Eigen::Map<const Tensor>(c.adjoint().data(), g.rows(), g.cols());
  });
}

Var gather_rows(Var a, std::span<const Index> rows) {
  Tensor out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= a.rows())
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " outside " +
                           shape_string(a.value()));
    out.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return a.tape().record(OpKind::gather_rows, {a}, std::move(out),
                         [idx = std::move(idx)](BackwardContext& c) {
                           auto& g = c.input_adjoint(0);
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             g.row(idx[r]) += c.adjoint().row(static_cast<Index>(r));
                         });
}

Var reduce_sum(Var a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(OpKind::reduce_sum, {a}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0).array() += c.adjoint()(0, 0);
  });
}

Var scale(Var a, double factor) {
  Tensor out = factor * a.value();
  return a.tape().record(OpKind::scale, {a}, std::move(out), [factor](BackwardContext& c) {
    c.input_adjoint(0) += factor * c.adjoint();
  });
}

Var squared_l2_distance(Var a, Var b) {
  auto& tape = same_tape(a, b, "squared_l2_distance");
  require_same_shape("squared_l2_distance", a.value(), b.value());
  Tensor out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm();
  return tape.record(OpKind::squared_l2_distance, {a, b}, std::move(out), [](BackwardContext& c) {
    const Tensor diff = 2.0 * c.adjoint()(0, 0) * (c.input(0) - c.input(1));
    c.input_adjoint(0) += diff;
    c.input_adjoint(1) -= diff;
  });
}

Var leaky_relu(Var a, double slope) {
  Tensor out = a.value().unaryExpr([slope](double x) { return leaky_relu(x, slope); });
  return a.tape().record(OpKind::leaky_relu, {a}, std::move(out), [slope](BackwardContext& c) {
    c.input_adjoint(0).array() +=
        c.adjoint().array() * c.input(0).array().unaryExpr([slope](double x) {
          return x > 0.0 ? 1.0 : slope;
        });
  });
}

Var tanh(Var a) {
  Tensor out = a.value().array().tanh().matrix();
  return a.tape().record(OpKind::tanh, {a}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0).array() += c.adjoint().array() * (1.0 - c.value().array().square());
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return a.tape().record(OpKind::sigmoid, {a}, std::move(out), [](BackwardContext& c) {
    const auto& y = c.value().array();
    c.input_adjoint(0).array() += c.adjoint().array() * y * (1.0 - y);
  });
}

Var softmax(Var a) {
  const auto& x = a.value();
  if (x.rows() != 1 && x.cols() != 1)
    throw DimensionError("softmax: expected a vector, got " + shape_string(x));
  Tensor out = (x.array() - x.maxCoeff()).exp().matrix();
  out /= out.sum();
  return a.tape().record(OpKind::softmax, {a}, std::move(out), [](BackwardContext& c) {
    const auto& y = c.value();
    const double dot = (c.adjoint().array() * y.array()).sum();
    c.input_adjoint(0).array() += y.array() * (c.adjoint().array() - dot);
  });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any())
    throw DomainError("log: non-positive input in " + shape_string(a.value()));
  Tensor out = a.value().array().log().matrix();
  return a.tape().record(OpKind::log, {a}, std::move(out), [](BackwardContext& c) {
    c.input_adjoint(0).array() += c.adjoint().array() / c.input(0).array();
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  Tensor out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape().record(OpKind::clamp, {a}, std::move(out), [lo, hi](BackwardContext& c) {
    const auto& x = c.input(0).array();
    c.input_adjoint(0).array() += ((x >= lo) && (x <= hi)).cast<double>() * c.adjoint().array();
  });
}

}  // namespace muse
