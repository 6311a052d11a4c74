#include "i2ckd/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

#include "i2ckd/conv_kernels.hpp"

namespace i2ckd::ad {

NodeRef leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  if (requires_grad) n->ensure_grad();
  return n;
}

NodeRef constant(Tensor value) { return leaf(std::move(value), false); }

NodeRef make_op(Tensor value, std::vector<NodeRef> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward_fn);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

namespace {

kern::ConvDims conv_dims(const Shape& x, const Shape& w, const Shape& b, bool three_by_three) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be [B,Cin,H,W], got " + x.str());
  if (three_by_three) {
    if (w.rank() != 4 || w.extent(2) != 3 || w.extent(3) != 3)
      throw std::invalid_argument("conv2d_3x3: weight must be [Cout,Cin,3,3], got " + w.str());
  } else {
    if (w.rank() != 2) throw std::invalid_argument("conv2d_1x1: weight must be [Cout,Cin], got " + w.str());
  }
  if (w.extent(1) != x.extent(1))
    throw std::invalid_argument("conv2d: channel mismatch, input " + x.str() + " vs weight " + w.str());
  if (b.rank() != 1 || b.extent(0) != w.extent(0))
    throw std::invalid_argument("conv2d: bias must be [Cout], got " + b.str());
  return kern::ConvDims{static_cast<int>(x.extent(0)), static_cast<int>(x.extent(1)),
                        static_cast<int>(x.extent(2)), static_cast<int>(x.extent(3)),
                        static_cast<int>(w.extent(0))};
}

}  // namespace

NodeRef conv2d_3x3(const NodeRef& x, const NodeRef& w, const NodeRef& b) {
  const kern::ConvDims d = conv_dims(x->value.shape(), w->value.shape(), b->value.shape(), true);
  std::vector<double> out(static_cast<std::size_t>(d.batch) * d.cout * d.h * d.w);
  kern::par::conv3x3_forward(x->value.data(), w->value.data(), b->value.data(), out.data(), d);
  Tensor value = Tensor::from_raw(Shape{x->value.shape().extent(0), w->value.shape().extent(0),
                                        x->value.shape().extent(2), x->value.shape().extent(3)},
                                  std::move(out));
  return make_op(std::move(value), {x, w, b}, [d](Node& self) {
    const NodeRef& x = self.parents[0];
    const NodeRef& w = self.parents[1];
    const NodeRef& b = self.parents[2];
    if (x->requires_grad)
      kern::par::conv3x3_backward_input(self.grad.data(), w->value.data(), x->ensure_grad().data(), d);
    if (w->requires_grad || b->requires_grad)
      kern::par::conv3x3_backward_weights(self.grad.data(), x->value.data(), w->ensure_grad().data(),
                                          b->ensure_grad().data(), d);
  });
}

NodeRef conv2d_1x1(const NodeRef& x, const NodeRef& w, const NodeRef& b) {
  const kern::ConvDims d = conv_dims(x->value.shape(), w->value.shape(), b->value.shape(), false);
  std::vector<double> out(static_cast<std::size_t>(d.batch) * d.cout * d.h * d.w);
  kern::par::conv1x1_forward(x->value.data(), w->value.data(), b->value.data(), out.data(), d);
  Tensor value = Tensor::from_raw(Shape{x->value.shape().extent(0), w->value.shape().extent(0),
                                        x->value.shape().extent(2), x->value.shape().extent(3)},
                                  std::move(out));
  return make_op(std::move(value), {x, w, b}, [d](Node& self) {
    const NodeRef& x = self.parents[0];
    const NodeRef& w = self.parents[1];
    const NodeRef& b = self.parents[2];
    if (x->requires_grad)
      kern::par::conv1x1_backward_input(self.grad.data(), w->value.data(), x->ensure_grad().data(), d);
    if (w->requires_grad || b->requires_grad)
      kern::par::conv1x1_backward_weights(self.grad.data(), x->value.data(), w->ensure_grad().data(),
                                          b->ensure_grad().data(), d);
  });
}

NodeRef relu(const NodeRef& x) {
  std::vector<double> out(x->value.numel());
  kern::par::relu_forward(x->value.data(), out.data(), out.size());
  Tensor value = Tensor::from_raw(x->value.shape(), std::move(out));
  return make_op(std::move(value), {x}, [](Node& self) {
    const NodeRef& x = self.parents[0];
    if (x->requires_grad)
      kern::par::relu_backward(x->value.data(), self.grad.data(), x->ensure_grad().data(), x->value.numel());
  });
}

NodeRef sum_all(const NodeRef& x) {
  double total = 0.0;
  for (std::size_t i = 0; i < x->value.numel(); ++i) total += x->value[i];
  return make_op(Tensor(Shape{}, total), {x}, [](Node& self) {
    const NodeRef& x = self.parents[0];
    if (!x->requires_grad) return;
    auto& g = x->ensure_grad();
    const double seed = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed;
  });
}

NodeRef weighted_sum_all(const NodeRef& x, Tensor weights) {
  if (!(weights.shape() == x->value.shape()))
    throw std::invalid_argument("weighted_sum_all: weight shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x->value.numel(); ++i) total += weights[i] * x->value[i];
  auto wcopy = std::make_shared<Tensor>(std::move(weights));
  return make_op(Tensor(Shape{}, total), {x}, [wcopy](Node& self) {
    const NodeRef& x = self.parents[0];
    if (!x->requires_grad) return;
    auto& g = x->ensure_grad();
    const double seed = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed * (*wcopy)[i];
  });
}

NodeRef scale(const NodeRef& scalar, double factor) {
  if (scalar->value.numel() != 1) throw std::invalid_argument("scale: input must be scalar");
  return make_op(Tensor(Shape{}, factor * scalar->value[0]), {scalar}, [factor](Node& self) {
    const NodeRef& s = self.parents[0];
    if (s->requires_grad) s->ensure_grad()[0] += factor * self.grad[0];
  });
}

NodeRef linear_combination(const std::vector<std::pair<NodeRef, double>>& terms) {
  if (terms.empty()) throw std::invalid_argument("linear_combination: no terms");
  double total = 0.0;
  std::vector<NodeRef> parents;
  std::vector<double> coeffs;
  for (const auto& [node, coeff] : terms) {
    if (node->value.numel() != 1) throw std::invalid_argument("linear_combination: non-scalar term");
    total += coeff * node->value[0];
    parents.push_back(node);
    coeffs.push_back(coeff);
  }
  return make_op(Tensor(Shape{}, total), std::move(parents), [coeffs](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const NodeRef& p = self.parents[i];
      if (p->requires_grad) p->ensure_grad()[0] += coeffs[i] * self.grad[0];
    }
  });
}

void backward(const NodeRef& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be a scalar node");

  // Iterative post-order DFS; creation order alone is not tracked, so the
  // topological order is recovered from the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass scratch; leaves keep accumulating.
  for (Node* n : order)
    if (!n->is_leaf) n->ensure_grad(), n->zero_grad();
  root->ensure_grad()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
  }
}

}  // namespace i2ckd::ad
