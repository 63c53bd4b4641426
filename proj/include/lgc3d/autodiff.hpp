#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "lgc3d/tensor.hpp"

namespace lgc3d {
namespace ad {

// Reverse-mode record. Interior nodes are created per forward pass; parameter
// leaves persist across steps so the optimizer can update value in place.
template <typename T>
class Node {
 public:
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pushes this->grad into parents
  const char* tag = "";                    // backward-rule tag

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
    return grad;
  }

  void zero_grad() {
    if (grad.numel() == value.numel()) grad.fill(T(0));
  }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_param(Tensor<T> value, const char* tag = "param") {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->tag = tag;
  return n;
}

template <typename T>
NodePtr<T> make_const(Tensor<T> value, const char* tag = "const") {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = false;
  n->tag = tag;
  return n;
}

template <typename T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backward_fn, const char* tag) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  n->tag = tag;
  return n;
}

// Accumulate src into dst's grad buffer.
template <typename T>
inline void accumulate_grad(Node<T>& dst, const Tensor<T>& src) {
  Tensor<T>& g = dst.ensure_grad();
  const T* s = src.data();
  T* d = g.data();
  int64_t n = g.numel();
  for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

// Reverse topological sweep from a scalar loss. Visits every reachable node
// exactly once; the graph is acyclic by construction.
template <typename T>
void backward(const NodePtr<T>& loss) {
  if (loss->value.numel() != 1)
    throw ValueError("backward: loss must be scalar, got " + loss->value.shape_string());

  // iterative post-order DFS
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  struct Frame {
    Node<T>* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  if (loss->requires_grad || !loss->parents.empty()) stack.push_back({loss.get(), 0});
  seen.insert(loss.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->parents.size()) {
      Node<T>* child = f.node->parents[f.next_child++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
  }
}

}  // namespace ad
}  // namespace lgc3d
