#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "i2ckd/tensor.hpp"

namespace i2ckd::ad {

// Reverse-mode tape over the small op set the networks need. Nodes form a
// DAG through shared parents; backward() walks it once in reverse
// topological order. A graph is single-owner while it is being built and
// differentiated.
struct Node;
using NodeRef = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  // Gradient buffer, same element count as value. For leaves it persists
  // across backward() calls (accumulation is additive) until zero_grad();
  // for interior nodes backward() resets it per pass.
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<NodeRef> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.numel()) grad.assign(value.numel(), 0.0);
    return grad;
  }
  void zero_grad() { grad.assign(value.numel(), 0.0); }
  Tensor grad_tensor() const { return Tensor(value.shape(), grad.empty() ? std::vector<double>(value.numel(), 0.0) : grad); }
};

// Trainable leaf (weights) or non-trainable leaf (frozen weights, inputs).
NodeRef leaf(Tensor value, bool requires_grad);
// Constant graph input; never receives gradient.
NodeRef constant(Tensor value);
// Interior op node; requires_grad is inherited from parents.
NodeRef make_op(Tensor value, std::vector<NodeRef> parents, std::function<void(Node&)> backward_fn);

// x [B,Cin,H,W], w [Cout,Cin,3,3], b [Cout] -> [B,Cout,H,W]; zero padding 1.
NodeRef conv2d_3x3(const NodeRef& x, const NodeRef& w, const NodeRef& b);
// x [B,Cin,H,W], w [Cout,Cin], b [Cout] -> [B,Cout,H,W].
NodeRef conv2d_1x1(const NodeRef& x, const NodeRef& w, const NodeRef& b);
// max(0, x); derivative at exactly 0 is 0.
NodeRef relu(const NodeRef& x);

// Scalar helpers.
NodeRef sum_all(const NodeRef& x);
// dot(weights, x) as a scalar node; used by gradient checks to reduce an
// op output to a scalar with a fixed random covector.
NodeRef weighted_sum_all(const NodeRef& x, Tensor weights);
NodeRef scale(const NodeRef& scalar, double factor);
// sum_i coeff_i * scalar_i
NodeRef linear_combination(const std::vector<std::pair<NodeRef, double>>& terms);

// Seeds root with gradient 1 and accumulates dRoot/dLeaf into every
// reachable leaf with requires_grad. Root must be scalar. Interior
// gradients are scratch; leaf gradients accumulate across calls.
void backward(const NodeRef& root);

}  // namespace i2ckd::ad
