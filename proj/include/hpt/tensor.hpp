#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hpt/errors.hpp"

namespace hpt {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Rank-1 tensors of length n behave as 1 x n matrices for row-wise ops.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError(detail::concat("tensor: shape ", shape_str(shape_), " holds ", shape_size(shape_),
                                          " values but ", data_.size(), " were given"));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
  }
  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }
  static Tensor scalar(double value) { return Tensor({1}, std::vector<double>{value}); }
  static Tensor identity(std::size_t n) {
    Tensor eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.at(i, i) = 1.0;
    return eye;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) noexcept { return data().subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const noexcept { return data().subspan(r * cols(), cols()); }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<const double> grad() const noexcept {
    return grad_ ? std::span<const double>(*grad_) : std::span<const double>{};
  }
  void set_grad(std::vector<double> grad) {
    if (grad.size() != data_.size()) {
      throw DimensionError(detail::concat("tensor: gradient length ", grad.size(), " does not match ", data_.size()));
    }
    grad_ = std::move(grad);
  }
  void clear_grad() noexcept { grad_.reset(); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Value equality (shape and data); the gradient slot is not compared.
  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  void validate_shape() const {
    if (shape_.empty()) throw DimensionError("tensor: shape must have at least one dimension");
    for (auto d : shape_) {
      if (d == 0) throw DimensionError(detail::concat("tensor: zero-sized dimension in ", shape_str(shape_)));
    }
  }

  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
};

/// Gather rows `indices` of a matrix into a new matrix.
inline Tensor take_rows(const Tensor& m, std::span<const std::size_t> indices) {
  Tensor out({indices.size(), m.cols()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul_elementwise,
  scale,
  neg,
  relu,
  tanh,
  exp,
  log,
  sum,
  mean,
  softmax_rows,
  log_softmax_rows,
  l2_normalize_rows,
  clamp,
  transpose,
};

inline std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul_elementwise: return "mul_elementwise";
    case OpKind::scale: return "scale";
    case OpKind::neg: return "neg";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log_softmax_rows: return "log_softmax_rows";
    case OpKind::l2_normalize_rows: return "l2_normalize_rows";
    case OpKind::clamp: return "clamp";
    case OpKind::transpose: return "transpose";
  }
  return "?";
}

/// Scalar attributes for ops that take them (scale factor, clamp bounds).
struct OpParams {
  double factor = 1.0;
  double lo = 0.0;
  double hi = 1.0;
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<std::vector<double>> per_node, std::vector<std::size_t> sizes)
      : per_node_(std::move(per_node)), sizes_(std::move(sizes)) {}

  /// Gradient of the root w.r.t. `v`; zeros when `v` does not influence the root.
  std::vector<double> of(Var v) const {
    if (v.id < per_node_.size() && !per_node_[v.id].empty()) return per_node_[v.id];
    return std::vector<double>(v.id < sizes_.size() ? sizes_[v.id] : 0, 0.0);
  }
  bool reached(Var v) const { return v.id < per_node_.size() && !per_node_[v.id].empty(); }

 private:
  std::vector<std::vector<double>> per_node_;
  std::vector<std::size_t> sizes_;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// sequence is always topologically sorted.
class Graph {
 public:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<std::size_t> inputs;
    OpParams params;
    Tensor value;
    bool needs_grad = false;
  };

  Var leaf(Tensor value, bool requires_grad = true) {
    nodes_.push_back(Node{OpKind::leaf, {}, {}, std::move(value), requires_grad});
    return Var{this, nodes_.size() - 1};
  }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var apply(OpKind op, std::span<const Var> inputs, OpParams params = {});

  /// Reverse pass from a scalar root. Leaf tensors that require gradients
  /// also receive their gradient in Tensor::grad().
  Gradients backward(Var root);

 private:
  Tensor forward(OpKind op, std::span<const Tensor* const> in, const OpParams& params) const;
  void propagate(const Node& node, const std::vector<double>& upstream, std::vector<std::vector<double>>& grads) const;

  // deque: appending nodes never invalidates references to earlier values.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(*this); }

namespace detail {

inline void require_arity(OpKind op, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ContractError(concat(op_name(op), ": expected ", want, " input(s), got ", got));
  }
}

inline bool is_row_vector_of(const Tensor& b, const Tensor& a) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rank() == 2;
}

inline void accumulate(std::vector<double>& dst, std::size_t size, auto&& fill) {
  if (dst.empty()) dst.assign(size, 0.0);
  fill(dst);
}

}  // namespace detail

inline Tensor Graph::forward(OpKind op, std::span<const Tensor* const> in, const OpParams& params) const {
  auto shape_error = [&](const Tensor& a, const Tensor& b) {
    return DimensionError(detail::concat(op_name(op), ": incompatible shapes ", shape_str(a.shape()), " and ",
                                         shape_str(b.shape())));
  };
  switch (op) {
    case OpKind::leaf:
      throw ContractError("apply: leaf is not an operation");
    case OpKind::matmul: {
      detail::require_arity(op, in.size(), 2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) throw shape_error(a, b);
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      Tensor out({n, m});
      for (std::size_t i = 0; i < n; ++i) {
        double* o = &out.at(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a.at(i, p);
          const double* br = b.data().data() + p * m;
          for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
        }
      }
      return out;
    }
    case OpKind::add:
    case OpKind::sub: {
      detail::require_arity(op, in.size(), 2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      const double sign = op == OpKind::add ? 1.0 : -1.0;
      Tensor out = a;
      if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] += sign * b[i];
      } else if (detail::is_row_vector_of(b, a)) {
        for (std::size_t r = 0; r < a.rows(); ++r) {
          auto row = out.row(r);
          for (std::size_t c = 0; c < a.cols(); ++c) row[c] += sign * b[c];
        }
      } else {
        throw shape_error(a, b);
      }
      return out;
    }
    case OpKind::mul_elementwise: {
      detail::require_arity(op, in.size(), 2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.shape() != b.shape()) throw shape_error(a, b);
      Tensor out = a;
      for (std::size_t i = 0; i < a.size(); ++i) out[i] *= b[i];
      return out;
    }
    case OpKind::scale:
    case OpKind::neg:
    case OpKind::relu:
    case OpKind::tanh:
    case OpKind::exp:
    case OpKind::log:
    case OpKind::clamp: {
      detail::require_arity(op, in.size(), 1);
      Tensor out = *in[0];
      for (double& v : out.values()) {
        switch (op) {
          case OpKind::scale: v *= params.factor; break;
          case OpKind::neg: v = -v; break;
          case OpKind::relu: v = v > 0.0 ? v : 0.0; break;
          case OpKind::tanh: v = std::tanh(v); break;
          case OpKind::exp: v = std::exp(v); break;
          case OpKind::log:
            if (!(v > 0.0)) throw DomainError(detail::concat("log: non-positive input ", v));
            v = std::log(v);
            break;
          case OpKind::clamp: v = std::clamp(v, params.lo, params.hi); break;
          default: break;
        }
      }
      return out;
    }
    case OpKind::sum:
    case OpKind::mean: {
      detail::require_arity(op, in.size(), 1);
      const Tensor& a = *in[0];
      double total = 0.0;
      for (double v : a.values()) total += v;
      if (op == OpKind::mean) total /= static_cast<double>(a.size());
      return Tensor::scalar(total);
    }
    case OpKind::softmax_rows:
    case OpKind::log_softmax_rows: {
      detail::require_arity(op, in.size(), 1);
      Tensor out = *in[0];
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double log_z = std::log(z);
        for (double& v : row) {
          v = op == OpKind::softmax_rows ? std::exp(v - mx) / z : v - mx - log_z;
        }
      }
      return out;
    }
    case OpKind::l2_normalize_rows: {
      detail::require_arity(op, in.size(), 1);
      Tensor out = *in[0];
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        if (sq == 0.0) {
          std::clog << "hpt: l2_normalize_rows: zero row " << r << " left unnormalized\n";
          continue;
        }
        const double norm = std::sqrt(sq);
        for (double& v : row) v /= norm;
      }
      return out;
    }
    case OpKind::transpose: {
      detail::require_arity(op, in.size(), 1);
      const Tensor& a = *in[0];
      if (a.rank() != 2) throw DimensionError(detail::concat("transpose: needs a matrix, got ", shape_str(a.shape())));
      Tensor out({a.cols(), a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      return out;
    }
  }
  throw ContractError("apply: unknown op");
}

inline Var Graph::apply(OpKind op, std::span<const Var> inputs, OpParams params) {
  std::vector<const Tensor*> values;
  std::vector<std::size_t> ids;
  bool needs_grad = false;
  for (const Var& v : inputs) {
    if (v.graph != this) throw ContractError(detail::concat(op_name(op), ": input belongs to another graph"));
    values.push_back(&nodes_.at(v.id).value);
    ids.push_back(v.id);
    needs_grad = needs_grad || nodes_[v.id].needs_grad;
  }
  Tensor out = forward(op, values, params);
  nodes_.push_back(Node{op, std::move(ids), params, std::move(out), needs_grad});
  return Var{this, nodes_.size() - 1};
}

inline void Graph::propagate(const Node& node, const std::vector<double>& g,
                             std::vector<std::vector<double>>& grads) const {
  const Tensor& y = node.value;
  auto input = [&](std::size_t i) -> const Node& { return nodes_[node.inputs[i]]; };
  auto slot = [&](std::size_t i) -> std::vector<double>* {
    const Node& n = input(i);
    if (!n.needs_grad) return nullptr;
    auto& dst = grads[node.inputs[i]];
    if (dst.empty()) dst.assign(n.value.size(), 0.0);
    return &dst;
  };

  switch (node.op) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      if (auto* da = slot(0)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * b.at(p, j);
            (*da)[i * k + p] += acc;
          }
      }
      if (auto* db = slot(1)) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            for (std::size_t j = 0; j < m; ++j) (*db)[p * m + j] += av * g[i * m + j];
          }
      }
      return;
    }
    case OpKind::add:
    case OpKind::sub: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      const double sign = node.op == OpKind::add ? 1.0 : -1.0;
      if (auto* da = slot(0))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      if (auto* db = slot(1)) {
        if (a.shape() == b.shape()) {
          for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += sign * g[i];
        } else {
          const std::size_t c = a.cols();
          for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t j = 0; j < c; ++j) (*db)[j] += sign * g[r * c + j];
        }
      }
      return;
    }
    case OpKind::mul_elementwise: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      if (auto* da = slot(0))
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b[i];
      if (auto* db = slot(1))
        for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a[i];
      return;
    }
    default:
      break;
  }

  auto* dx = slot(0);
  if (!dx) return;
  const Tensor& x = input(0).value;
  switch (node.op) {
    case OpKind::scale:
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += node.params.factor * g[i];
      return;
    case OpKind::neg:
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] -= g[i];
      return;
    case OpKind::relu:
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += x[i] > 0.0 ? g[i] : 0.0;
      return;
    case OpKind::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    case OpKind::exp:
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * y[i];
      return;
    case OpKind::log:
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] / x[i];
      return;
    case OpKind::clamp:
      for (std::size_t i = 0; i < g.size(); ++i)
        (*dx)[i] += (x[i] >= node.params.lo && x[i] <= node.params.hi) ? g[i] : 0.0;
      return;
    case OpKind::sum:
      for (double& v : *dx) v += g[0];
      return;
    case OpKind::mean: {
      const double share = g[0] / static_cast<double>(dx->size());
      for (double& v : *dx) v += share;
      return;
    }
    case OpKind::softmax_rows: {
      const std::size_t c = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
        for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
      }
      return;
    }
    case OpKind::log_softmax_rows: {
      const std::size_t c = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += g[r * c + j];
        for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += g[r * c + j] - std::exp(y[r * c + j]) * total;
      }
      return;
    }
    case OpKind::l2_normalize_rows: {
      const std::size_t c = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) sq += x[r * c + j] * x[r * c + j];
        if (sq == 0.0) continue;
        const double norm = std::sqrt(sq);
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += y[r * c + j] * g[r * c + j];
        for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += (g[r * c + j] - y[r * c + j] * dot) / norm;
      }
      return;
    }
    case OpKind::transpose: {
      const std::size_t rows = x.rows(), cols = x.cols();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) (*dx)[i * cols + j] += g[j * rows + i];
      return;
    }
    default:
      return;
  }
}

inline Gradients Graph::backward(Var root) {
  if (root.graph != this || root.id >= nodes_.size()) throw ContractError("backward: root is not part of this graph");
  if (nodes_[root.id].value.size() != 1) {
    throw ContractError(
        detail::concat("backward: root must be scalar, got shape ", shape_str(nodes_[root.id].value.shape())));
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  std::vector<std::size_t> sizes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) sizes[i] = nodes_[i].value.size();
  if (nodes_[root.id].needs_grad) {
    grads[root.id] = {1.0};
    for (std::size_t id = root.id + 1; id-- > 0;) {
      if (grads[id].empty()) continue;
      propagate(nodes_[id], grads[id], grads);
    }
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.op == OpKind::leaf && n.needs_grad) {
      n.value.set_grad(grads[id].empty() ? std::vector<double>(n.value.size(), 0.0) : grads[id]);
    }
  }
  return Gradients(std::move(grads), std::move(sizes));
}

// Free-function spellings of Graph::apply.

inline Var apply(OpKind op, std::initializer_list<Var> inputs, OpParams params = {}) {
  if (inputs.size() == 0) throw ContractError("apply: no inputs");
  return inputs.begin()->graph->apply(op, std::span<const Var>(inputs.begin(), inputs.size()), params);
}

inline Var matmul(Var a, Var b) { return apply(OpKind::matmul, {a, b}); }
inline Var add(Var a, Var b) { return apply(OpKind::add, {a, b}); }
inline Var sub(Var a, Var b) { return apply(OpKind::sub, {a, b}); }
inline Var mul(Var a, Var b) { return apply(OpKind::mul_elementwise, {a, b}); }
inline Var scale(Var a, double factor) { return apply(OpKind::scale, {a}, OpParams{factor}); }
inline Var neg(Var a) { return apply(OpKind::neg, {a}); }
inline Var relu(Var a) { return apply(OpKind::relu, {a}); }
inline Var tanh(Var a) { return apply(OpKind::tanh, {a}); }
inline Var exp(Var a) { return apply(OpKind::exp, {a}); }
inline Var log(Var a) { return apply(OpKind::log, {a}); }
inline Var sum(Var a) { return apply(OpKind::sum, {a}); }
inline Var mean(Var a) { return apply(OpKind::mean, {a}); }
inline Var softmax_rows(Var a) { return apply(OpKind::softmax_rows, {a}); }
inline Var log_softmax_rows(Var a) { return apply(OpKind::log_softmax_rows, {a}); }
inline Var l2_normalize_rows(Var a) { return apply(OpKind::l2_normalize_rows, {a}); }
inline Var clamp(Var a, double lo, double hi) { return apply(OpKind::clamp, {a}, OpParams{1.0, lo, hi}); }
inline Var transpose(Var a) { return apply(OpKind::transpose, {a}); }

}  // namespace hpt
