#include "ltkd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ltkd/error.hpp"

namespace ltkd {
namespace {

// Accumulate `delta` into the (lazily allocated) gradient slot.
void accumulate(std::vector<Matrix>& grads, NodeId id, const Matrix& delta) {
  Matrix& slot = grads[id.index];
  if (slot.empty() && delta.size() != 0) {
    slot = delta;
    return;
  }
  auto dst = slot.values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

NodeId Tape::push(Matrix value, bool requires_grad, Backprop backprop) {
  require_finite(value, "tape");
  nodes_.push_back(Node{std::move(value), requires_grad, std::move(backprop)});
  return NodeId{nodes_.size() - 1};
}

NodeId Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

NodeId Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  Matrix out = ltkd::matmul(value(a), value(b));
  return push(std::move(out), node(a).requires_grad || node(b).requires_grad,
              [this, a, b](const Matrix& g, std::vector<Matrix>& grads) {
                if (node(a).requires_grad) accumulate(grads, a, matmul_nt(g, value(b)));
                if (node(b).requires_grad) accumulate(grads, b, matmul_tn(value(a), g));
              });
}

NodeId Tape::add(NodeId a, NodeId b) {
  return push(ltkd::add(value(a), value(b)), node(a).requires_grad || node(b).requires_grad,
              [a, b](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, g);
                accumulate(grads, b, g);
              });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  return push(ltkd::sub(value(a), value(b)), node(a).requires_grad || node(b).requires_grad,
              [a, b](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, g);
                accumulate(grads, b, ltkd::scale(g, -1.0));
              });
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  return push(ltkd::hadamard(value(a), value(b)), node(a).requires_grad || node(b).requires_grad,
              [this, a, b](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, ltkd::hadamard(g, value(b)));
                accumulate(grads, b, ltkd::hadamard(g, value(a)));
              });
}

NodeId Tape::scale(NodeId a, double s) {
  return push(ltkd::scale(value(a), s), node(a).requires_grad,
              [a, s](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, ltkd::scale(g, s));
              });
}

NodeId Tape::add_row_bias(NodeId a, NodeId bias) {
  return push(ltkd::add_row_bias(value(a), value(bias)),
              node(a).requires_grad || node(bias).requires_grad,
              [a, bias](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, g);
                accumulate(grads, bias, column_sums(g));
              });
}

NodeId Tape::relu(NodeId a) {
  return push(ltkd::relu(value(a)), node(a).requires_grad,
              [this, a](const Matrix& g, std::vector<Matrix>& grads) {
                Matrix d = g;
                auto in = value(a).values();
                auto dv = d.values();
                for (std::size_t i = 0; i < dv.size(); ++i)
                  if (!(in[i] > 0.0)) dv[i] = 0.0;
                accumulate(grads, a, d);
              });
}

NodeId Tape::exp(NodeId a) {
  Matrix out = value(a);
  for (double& v : out.values()) v = std::exp(v);
  const NodeId self{nodes_.size()};
  return push(std::move(out), node(a).requires_grad,
              [this, a, self](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, ltkd::hadamard(g, value(self)));
              });
}

NodeId Tape::select_cols(NodeId a, std::span<const std::size_t> cols) {
  const Matrix& in = value(a);
  std::vector<std::size_t> picked(cols.begin(), cols.end());
  Matrix out(in.rows(), picked.size());
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t j = 0; j < picked.size(); ++j) {
      if (picked[j] >= in.cols()) throw ShapeError("select_cols: column out of range");
      out(r, j) = in(r, picked[j]);
    }
  return push(std::move(out), node(a).requires_grad,
              [this, a, picked](const Matrix& g, std::vector<Matrix>& grads) {
                Matrix d(value(a).rows(), value(a).cols());
                for (std::size_t r = 0; r < d.rows(); ++r)
                  for (std::size_t j = 0; j < picked.size(); ++j) d(r, picked[j]) += g(r, j);
                accumulate(grads, a, d);
              });
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool needs = false;
  for (NodeId p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += value(p).cols();
    needs = needs || node(p).requires_grad;
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (NodeId p : parts) {
    const Matrix& v = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  std::vector<NodeId> ids(parts.begin(), parts.end());
  return push(std::move(out), needs, [this, ids](const Matrix& g, std::vector<Matrix>& grads) {
    std::size_t off = 0;
    for (NodeId p : ids) {
      const std::size_t w = value(p).cols();
      Matrix d(g.rows(), w);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < w; ++c) d(r, c) = g(r, off + c);
      accumulate(grads, p, d);
      off += w;
    }
  });
}

NodeId Tape::logsumexp_rows(NodeId a) {
  const Matrix& in = value(a);
  if (in.cols() == 0) throw ShapeError("logsumexp_rows: no columns");
  Matrix out(in.rows(), 1);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto row = in.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    out(r, 0) = m + std::log(s);
  }
  const NodeId self{nodes_.size()};
  return push(std::move(out), node(a).requires_grad,
              [this, a, self](const Matrix& g, std::vector<Matrix>& grads) {
                const Matrix& in = value(a);
                const Matrix& lse = value(self);
                Matrix d(in.rows(), in.cols());
                for (std::size_t r = 0; r < in.rows(); ++r)
                  for (std::size_t c = 0; c < in.cols(); ++c)
                    d(r, c) = g(r, 0) * std::exp(in(r, c) - lse(r, 0));
                accumulate(grads, a, d);
              });
}

NodeId Tape::sub_col(NodeId a, NodeId col) {
  const Matrix& in = value(a);
  const Matrix& cv = value(col);
  if (cv.rows() != in.rows() || cv.cols() != 1) throw ShapeError("sub_col: column shape mismatch");
  Matrix out = in;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v -= cv(r, 0);
  return push(std::move(out), node(a).requires_grad || node(col).requires_grad,
              [a, col](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, g);
                Matrix d(g.rows(), 1);
                for (std::size_t r = 0; r < g.rows(); ++r)
                  for (double v : g.row(r)) d(r, 0) -= v;
                accumulate(grads, col, d);
              });
}

NodeId Tape::sum(NodeId a) {
  Matrix out(1, 1, ltkd::sum(value(a)));
  return push(std::move(out), node(a).requires_grad,
              [this, a](const Matrix& g, std::vector<Matrix>& grads) {
                accumulate(grads, a, Matrix(value(a).rows(), value(a).cols(), g(0, 0)));
              });
}

Gradients Tape::backward(NodeId loss) const {
  const Matrix& out = value(loss);
  if (out.rows() != 1 || out.cols() != 1)
    throw ContractError("backward: loss node must be 1x1, got " + std::to_string(out.rows()) +
                        "x" + std::to_string(out.cols()));
  std::vector<Matrix> grads(nodes_.size());
  grads[loss.index] = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || !n.backprop || grads[i].empty()) continue;
    n.backprop(grads[i], grads);
  }
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (grads[i].empty()) grads[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
  return Gradients(std::move(grads));
}

}  // namespace ltkd
