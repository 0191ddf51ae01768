#include "orseq/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace orseq {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

CMapMat as_mat(const Tensor& t) {
  return CMapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MapMat as_mat(Tensor& t) {
  return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
CMapVec as_vec(const Tensor& t) { return CMapVec(t.data(), static_cast<Eigen::Index>(t.size())); }
MapVec as_vec(Tensor& t) { return MapVec(t.data(), static_cast<Eigen::Index>(t.size())); }

// Softmax groups: `groups` independent slices of `n` elements, element k of
// group g at offset(g) + k * stride.
struct AxisLayout {
  std::size_t groups, n, stride, group_step;
  std::size_t offset(std::size_t g) const { return g * group_step; }
};

AxisLayout layout_for(const Tensor& t, std::size_t axis, const char* op) {
  if (t.rank() == 1 && axis == 0) return {1, t.size(), 1, 0};
  if (t.rank() == 2 && axis == 1) return {t.rows(), t.cols(), 1, t.cols()};
  if (t.rank() == 2 && axis == 0) return {t.cols(), t.rows(), t.cols(), 1};
  throw ShapeError(op, t.shape(), "has no axis " + std::to_string(axis));
}

void softmax_into(const Tensor& x, Tensor& y, const AxisLayout& l) {
  for (std::size_t g = 0; g < l.groups; ++g) {
    const std::size_t o = l.offset(g);
    double mx = x[o];
    for (std::size_t k = 1; k < l.n; ++k) mx = std::max(mx, x[o + k * l.stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < l.n; ++k) {
      const double e = std::exp(x[o + k * l.stride] - mx);
      y[o + k * l.stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < l.n; ++k) y[o + k * l.stride] /= z;
  }
}

void require_vector(const Tensor& t, const char* op) {
  if (t.rank() != 1) throw ShapeError(op, t.shape(), "is not a vector");
}

}  // namespace

Tensor softmax(const Tensor& logits, std::size_t axis) {
  if (logits.empty()) throw ShapeError("softmax", logits.shape(), "is empty");
  Tensor out(logits.shape());
  softmax_into(logits, out, layout_for(logits, axis, "softmax"));
  return out;
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.empty()) throw ShapeError("log_softmax", logits.shape(), "is empty");
  require_vector(logits, "log_softmax");
  const auto v = logits.values();
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lz = mx + std::log(z);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lz;
  return out;
}

// ---- construction -----------------------------------------------------------

Expr Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Expr{static_cast<int>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(Expr e) const {
  if (e.id < 0 || static_cast<std::size_t>(e.id) >= nodes_.size())
    throw Error("graph: invalid expression handle " + std::to_string(e.id));
  return nodes_[static_cast<std::size_t>(e.id)];
}

const Tensor& Graph::val(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

const Tensor& Graph::value(Expr e) const {
  const Node& n = node(e);
  return n.external ? *n.external : n.value;
}

const Tensor& Graph::grad(Expr e) const { return node(e).grad; }

Expr Graph::constant(Tensor value) {
  Node n{Op::Constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Expr Graph::parameter(const Tensor& value, Tensor* grad) {
  if (auto it = bound_.find(&value); it != bound_.end()) {
    Node& n = nodes_[static_cast<std::size_t>(it->second)];
    if (grad && !n.sink) {
      n.sink = grad;
      n.needs_grad = true;
    }
    return Expr{it->second};
  }
  if (grad && grad->shape() != value.shape()) throw ShapeError("parameter", value.shape(), grad->shape());
  Node n{Op::Parameter};
  n.external = &value;
  n.sink = grad;
  n.needs_grad = grad != nullptr;
  Expr e = push(std::move(n));
  bound_.emplace(&value, e.id);
  return e;
}

Expr Graph::lookup(const Tensor& table, std::size_t row, Tensor* grad) {
  if (table.rank() != 2 || row >= table.rows())
    throw ShapeError("lookup", table.shape(), "has no row " + std::to_string(row));
  if (grad && grad->shape() != table.shape()) throw ShapeError("lookup", table.shape(), grad->shape());
  Node n{Op::Lookup};
  n.value = table.row(row);
  n.sink = grad;
  n.index = row;
  n.needs_grad = grad != nullptr;
  return push(std::move(n));
}

Expr Graph::matmul(Expr a, Expr b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() > 2 || A.cols() != B.rows()) throw ShapeError("matmul", A.shape(), B.shape());
  Node n{Op::MatMul, a.id, b.id};
  if (B.rank() == 1) {
    n.value = Tensor({A.rows()});
    as_vec(n.value).noalias() = as_mat(A) * as_vec(B);
  } else {
    n.value = Tensor({A.rows(), B.cols()});
    as_mat(n.value).noalias() = as_mat(A) * as_mat(B);
  }
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::transpose(Expr a) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw ShapeError("transpose", A.shape(), "is not a matrix");
  Node n{Op::Transpose, a.id};
  n.value = Tensor({A.cols(), A.rows()});
  as_mat(n.value) = as_mat(A).transpose();
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::add(Expr a, Expr b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Node n{Op::Add, a.id, b.id};
  if (A.shape() == B.shape()) {
    n.value = A;
    for (std::size_t i = 0; i < B.size(); ++i) n.value[i] += B[i];
  } else if (A.rank() == 2 && B.rank() == 1 && A.cols() == B.size()) {
    n.op = Op::AddRowBroadcast;
    n.value = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) n.value.at(r, c) += B[c];
  } else {
    throw ShapeError("add", A.shape(), B.shape());
  }
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::sub(Expr a, Expr b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) throw ShapeError("sub", A.shape(), B.shape());
  Node n{Op::Sub, a.id, b.id};
  n.value = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.value[i] -= B[i];
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::mul(Expr a, Expr b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) throw ShapeError("mul", A.shape(), B.shape());
  Node n{Op::Mul, a.id, b.id};
  n.value = A;
  for (std::size_t i = 0; i < B.size(); ++i) n.value[i] *= B[i];
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::scale(Expr a, double factor) {
  Node n{Op::Scale, a.id};
  n.value = value(a);
  for (auto& v : n.value.values()) v *= factor;
  n.factor = factor;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::tanh(Expr a) {
  Node n{Op::Tanh, a.id};
  n.value = value(a);
  for (auto& v : n.value.values()) v = std::tanh(v);
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::sigmoid(Expr a) {
  Node n{Op::Sigmoid, a.id};
  n.value = value(a);
  for (auto& v : n.value.values()) v = 1.0 / (1.0 + std::exp(-v));
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::log(Expr a) {
  Node n{Op::Log, a.id};
  n.value = value(a);
  for (auto& v : n.value.values()) v = std::log(v);
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::concat(const std::vector<Expr>& parts) {
  if (parts.empty()) throw Error("concat: no operands");
  std::vector<double> out;
  Node n{Op::Concat};
  for (Expr p : parts) {
    const Tensor& t = value(p);
    require_vector(t, "concat");
    out.insert(out.end(), t.values().begin(), t.values().end());
    n.args.push_back(p.id);
    n.needs_grad = n.needs_grad || needs(p.id);
  }
  n.value = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Expr Graph::stack_rows(const std::vector<Expr>& rows) {
  if (rows.empty()) throw Error("stack_rows: no operands");
  const Tensor& first = value(rows.front());
  require_vector(first, "stack_rows");
  const std::size_t width = first.size();
  Node n{Op::StackRows};
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (Expr r : rows) {
    const Tensor& t = value(r);
    if (t.shape() != first.shape()) throw ShapeError("stack_rows", first.shape(), t.shape());
    out.insert(out.end(), t.values().begin(), t.values().end());
    n.args.push_back(r.id);
    n.needs_grad = n.needs_grad || needs(r.id);
  }
  n.value = Tensor({rows.size(), width}, std::move(out));
  return push(std::move(n));
}

Expr Graph::slice(Expr a, std::size_t offset, std::size_t length) {
  const Tensor& A = value(a);
  require_vector(A, "slice");
  if (length == 0 || offset + length > A.size())
    throw ShapeError("slice", A.shape(),
                     "cannot yield [" + std::to_string(offset) + ", " + std::to_string(offset + length) + ")");
  Node n{Op::Slice, a.id};
  const auto first = A.values().begin() + static_cast<std::ptrdiff_t>(offset);
  n.value = Tensor::vector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(length)));
  n.index = offset;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::softmax(Expr a, std::size_t axis) {
  Node n{Op::Softmax, a.id};
  n.value = orseq::softmax(value(a), axis);
  n.index = axis;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::log_softmax(Expr a) {
  Node n{Op::LogSoftmax, a.id};
  n.value = orseq::log_softmax(value(a));
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::sum(Expr a) {
  Node n{Op::Sum, a.id};
  double s = 0.0;
  for (double v : value(a).values()) s += v;
  n.value = Tensor::scalar(s);
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::pick(Expr a, std::size_t index) {
  const Tensor& A = value(a);
  require_vector(A, "pick");
  if (index >= A.size()) throw ShapeError("pick", A.shape(), "has no element " + std::to_string(index));
  Node n{Op::Pick, a.id};
  n.value = Tensor::scalar(A[index]);
  n.index = index;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

// ---- reverse pass -----------------------------------------------------------

Tensor& Graph::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor(val(id).shape());
  return n.grad;
}

double Graph::evaluate_and_backward(Expr root) {
  backward(root);
  return value(root)[0];
}

void Graph::backward(Expr root) {
  const Tensor& r = value(root);
  if (r.size() != 1) throw ShapeError("backward", r.shape(), "root must hold a single value");
  for (auto& n : nodes_) n.grad = Tensor();
  grad_of(root.id).fill(1.0);
  for (std::size_t i = static_cast<std::size_t>(root.id) + 1; i-- > 0;) {
    if (nodes_[i].needs_grad && !nodes_[i].grad.empty()) backprop(i);
  }
}

void Graph::backprop(std::size_t id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  const Tensor& y = n.value;
  switch (n.op) {
    case Op::Constant:
      break;
    case Op::Parameter:
      if (n.sink)
        for (std::size_t i = 0; i < g.size(); ++i) (*n.sink)[i] += g[i];
      break;
    case Op::Lookup:
      if (n.sink) {
        double* row = n.sink->data() + n.index * n.sink->cols();
        for (std::size_t i = 0; i < g.size(); ++i) row[i] += g[i];
      }
      break;
    case Op::MatMul: {
      const Tensor& A = val(n.a);
      const Tensor& B = val(n.b);
      if (B.rank() == 1) {
        if (needs(n.a)) as_mat(grad_of(n.a)).noalias() += as_vec(g) * as_vec(B).transpose();
        if (needs(n.b)) as_vec(grad_of(n.b)).noalias() += as_mat(A).transpose() * as_vec(g);
      } else {
        if (needs(n.a)) as_mat(grad_of(n.a)).noalias() += as_mat(g) * as_mat(B).transpose();
        if (needs(n.b)) as_mat(grad_of(n.b)).noalias() += as_mat(A).transpose() * as_mat(g);
      }
      break;
    }
    case Op::Transpose:
      as_mat(grad_of(n.a)) += as_mat(g).transpose();
      break;
    case Op::Add:
      if (needs(n.a)) as_vec(grad_of(n.a)) += as_vec(g);
      if (needs(n.b)) as_vec(grad_of(n.b)) += as_vec(g);
      break;
    case Op::AddRowBroadcast:
      if (needs(n.a)) as_vec(grad_of(n.a)) += as_vec(g);
      if (needs(n.b)) as_vec(grad_of(n.b)) += as_mat(g).colwise().sum().transpose();
      break;
    case Op::Sub:
      if (needs(n.a)) as_vec(grad_of(n.a)) += as_vec(g);
      if (needs(n.b)) as_vec(grad_of(n.b)) -= as_vec(g);
      break;
    case Op::Mul:
      if (needs(n.a)) as_vec(grad_of(n.a)) += as_vec(g).cwiseProduct(as_vec(val(n.b)));
      if (needs(n.b)) as_vec(grad_of(n.b)) += as_vec(g).cwiseProduct(as_vec(val(n.a)));
      break;
    case Op::Scale:
      as_vec(grad_of(n.a)) += n.factor * as_vec(g);
      break;
    case Op::Tanh: {
      Tensor& ga = grad_of(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Sigmoid: {
      Tensor& ga = grad_of(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::Log: {
      Tensor& ga = grad_of(n.a);
      const Tensor& x = val(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      break;
    }
    case Op::Concat:
    case Op::StackRows: {
      std::size_t offset = 0;
      for (int arg : n.args) {
        const std::size_t len = val(arg).size();
        if (needs(arg)) {
          Tensor& ga = grad_of(arg);
          for (std::size_t i = 0; i < len; ++i) ga[i] += g[offset + i];
        }
        offset += len;
      }
      break;
    }
    case Op::Slice: {
      Tensor& ga = grad_of(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[n.index + i] += g[i];
      break;
    }
    case Op::Softmax: {
      Tensor& ga = grad_of(n.a);
      const AxisLayout l = layout_for(y, n.index, "softmax");
      for (std::size_t grp = 0; grp < l.groups; ++grp) {
        const std::size_t o = l.offset(grp);
        double dot = 0.0;
        for (std::size_t k = 0; k < l.n; ++k) dot += g[o + k * l.stride] * y[o + k * l.stride];
        for (std::size_t k = 0; k < l.n; ++k) {
          const std::size_t at = o + k * l.stride;
          ga[at] += y[at] * (g[at] - dot);
        }
      }
      break;
    }
    case Op::LogSoftmax: {
      Tensor& ga = grad_of(n.a);
      double total = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) total += g[i];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] - std::exp(y[i]) * total;
      break;
    }
    case Op::Sum: {
      Tensor& ga = grad_of(n.a);
      for (auto& v : ga.values()) v += g[0];
      break;
    }
    case Op::Pick:
      grad_of(n.a)[n.index] += g[0];
      break;
  }
}

}  // namespace orseq
