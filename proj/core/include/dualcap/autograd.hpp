#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major matrices.
// A graph is built eagerly by the op functions below; backward() walks it once
// in reverse topological order. Nodes whose inputs need no gradient carry no
// backward closure, so inference builds no tape.

#include "dualcap/parameter.hpp"
#include "dualcap/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace dualcap::ag {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

Var constant(Matrix value);
/// Binds a parameter; frozen parameters bind as constants and receive no gradient.
Var leaf(Parameter& p);
/// Leaf that is not backed by a Parameter (finite-difference rigs, prefix probes).
Var variable(Matrix value);

/// Accumulates d(loss)/d(node) into every reachable node, and into Parameter::grad for leaves.
void backward(const Var& loss);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& bias);
Var add_const(const Var& x, const Matrix& c);
Var scale(const Var& x, double s);
Var scale_by(const Var& x, const Var& scalar);
Var reciprocal(const Var& scalar);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention; mask(i, j) == true lets query row i see key row j.
Var attention(const Var& q, const Var& k, const Var& v, const BoolMatrix& mask, int heads);

Var rows(const Var& x, Eigen::Index begin, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var embedding(const Var& table, std::span<const int> ids);
Var normalize_rows(const Var& x, double eps = 1e-12);
/// Max over consecutive row groups: (G*group x C) -> (G x C).
Var group_max_rows(const Var& x, Eigen::Index group);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

/// Sum over rows of -log softmax(logits[row])[target[row]]; negative targets are skipped.
Var cross_entropy_sum(const Var& logits, std::span<const int> targets);
/// Sum of binary cross-entropy with logits over a column vector.
Var bce_with_logits_sum(const Var& logits, std::span<const double> labels);

}  // namespace dualcap::ag
