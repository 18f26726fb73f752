#pragma once

// Minimal reverse-mode differentiation over Matrix values. Operations are
// recorded in call order, so node inputs always precede the node itself and a
// single reverse sweep visits every node once.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ltkd/matrix.hpp"

namespace ltkd {

struct NodeId {
  std::size_t index = 0;
  bool operator==(const NodeId&) const = default;
};

class Gradients {
 public:
  explicit Gradients(std::vector<Matrix> grads) : grads_(std::move(grads)) {}
  /// Gradient of the loss with respect to `node`; zeros if the loss does not depend on it.
  const Matrix& wrt(NodeId node) const { return grads_.at(node.index); }

 private:
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  Tape() = default;
  // Recorded backprop closures refer to this tape, so it stays put.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  NodeId variable(Matrix value);
  /// Leaf treated as constant: no gradient flows into it.
  NodeId constant(Matrix value);

  const Matrix& value(NodeId node) const { return nodes_.at(node.index).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId add_row_bias(NodeId a, NodeId bias);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  /// Columns of `a` in the given order.
  NodeId select_cols(NodeId a, std::span<const std::size_t> cols);
  /// Horizontal concatenation; all parts share a row count.
  NodeId concat_cols(std::span<const NodeId> parts);
  /// Per-row log(sum(exp(a))) as a rows x 1 column, max-shifted.
  NodeId logsumexp_rows(NodeId a);
  /// a - col broadcast across columns; col is rows x 1.
  NodeId sub_col(NodeId a, NodeId col);
  /// Sum of all entries as a 1 x 1 node.
  NodeId sum(NodeId a);

  /// Reverse sweep from a 1 x 1 loss node. Throws ContractError for non-scalar losses.
  Gradients backward(NodeId loss) const;

 private:
  using Backprop = std::function<void(const Matrix& grad_out, std::vector<Matrix>& grads)>;

  struct Node {
    Matrix value;
    bool requires_grad = false;
    Backprop backprop;
  };

  NodeId push(Matrix value, bool requires_grad, Backprop backprop);
  const Node& node(NodeId id) const { return nodes_.at(id.index); }

  std::vector<Node> nodes_;
};

}  // namespace ltkd
