#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include "orseq/tensor.hpp"

namespace orseq {

/// Handle to a node of a Graph. Only meaningful together with its graph.
struct Expr {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Eagerly evaluated expression tape with reverse-mode differentiation.
///
/// Every builder method computes its node's value immediately. backward()
/// walks the tape in reverse and, for each parameter or lookup node that was
/// given a gradient sink, adds d(root)/d(parameter) into that sink.
///
/// The op set is closed:
///   constant, parameter, lookup (embedding row), matmul, transpose,
///   add (same shape, or matrix + row-vector broadcast), sub, mul
///   (elementwise), scale, tanh, sigmoid, log, concat, stack_rows, slice,
///   softmax, log_softmax, sum, pick (gather one element).
///
/// Matrices are rank 2, vectors rank 1, scalars shape {1}.
class Graph {
 public:
  Graph() { nodes_.reserve(256); }

  Expr constant(Tensor value);
  /// Leaf bound to external storage. `value` must outlive the graph. If
  /// `grad` is non-null, backward() accumulates into it (same shape).
  /// Binding the same tensor twice returns the same node.
  Expr parameter(const Tensor& value, Tensor* grad = nullptr);
  /// Row `row` of matrix `table` as a vector; gradient scatters into that row.
  Expr lookup(const Tensor& table, std::size_t row, Tensor* grad = nullptr);

  /// (m×k)·(k×n) -> m×n, or (m×k)·(k) -> m.
  Expr matmul(Expr a, Expr b);
  Expr transpose(Expr a);
  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr mul(Expr a, Expr b);
  Expr scale(Expr a, double factor);
  Expr tanh(Expr a);
  Expr sigmoid(Expr a);
  Expr log(Expr a);
  /// Concatenation of vectors.
  Expr concat(const std::vector<Expr>& parts);
  /// Equal-length vectors as the rows of a matrix.
  Expr stack_rows(const std::vector<Expr>& rows);
  /// Contiguous sub-vector [offset, offset + length).
  Expr slice(Expr a, std::size_t offset, std::size_t length);
  /// axis 0 for a vector; 0 (down columns) or 1 (along rows) for a matrix.
  Expr softmax(Expr a, std::size_t axis = 0);
  /// Numerically stable log(softmax(a)) of a vector.
  Expr log_softmax(Expr a);
  /// Sum of all elements -> scalar.
  Expr sum(Expr a);
  /// Element `index` of a vector -> scalar.
  Expr pick(Expr a, std::size_t index);

  const Tensor& value(Expr e) const;
  /// Gradient of the last backward() root with respect to `e`.
  const Tensor& grad(Expr e) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a single-element root. Parameter sinks are accumulated
  /// into, never overwritten.
  void backward(Expr root);

  /// Forward value of `root` after running backward() from it.
  double evaluate_and_backward(Expr root);

 private:
  enum class Op {
    Constant, Parameter, Lookup, MatMul, Transpose, Add, AddRowBroadcast, Sub, Mul, Scale,
    Tanh, Sigmoid, Log, Concat, StackRows, Slice, Softmax, LogSoftmax, Sum, Pick
  };

  struct Node {
    explicit Node(Op op_, int a_ = -1, int b_ = -1) : op(op_), a(a_), b(b_) {}
    Op op;
    int a;
    int b;
    std::vector<int> args;
    Tensor value;               // unused for Parameter nodes
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    std::size_t index = 0;      // lookup row, slice offset, pick index, softmax axis
    double factor = 0.0;
    bool needs_grad = false;
    Tensor grad;
  };

  Expr push(Node node);
  const Node& node(Expr e) const;
  const Tensor& val(int id) const;
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  Tensor& grad_of(int id);
  void backprop(std::size_t id);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> bound_;
};

/// Value-level softmax with max subtraction. Empty input throws ShapeError.
Tensor softmax(const Tensor& logits, std::size_t axis = 0);
Tensor log_softmax(const Tensor& logits);

}  // namespace orseq
