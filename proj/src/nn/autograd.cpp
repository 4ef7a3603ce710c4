#include "objcomp/nn/autograd.hpp"

#include <unordered_set>

#include "objcomp/errors.hpp"

namespace objcomp::nn {

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (grad.empty()) {
    check_shape(g.shape(), value.shape(), "gradient accumulation");
    grad = g;
  } else {
    grad += g;
  }
}

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> variable(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return node;
}

template <typename T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1) {
    throw ShapeError("backward() requires a scalar root, got shape " + shape_string(root->shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Tensor<T>(root->shape(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (Node<T>* node : order) {
    if (node->backward_fn) node->grad = Tensor<T>();
  }
}

#define OBJCOMP_INSTANTIATE(T)                                                                    \
  template struct Node<T>;                                                                        \
  template Var<T> constant<T>(Tensor<T>);                                                         \
  template Var<T> variable<T>(Tensor<T>, bool);                                                   \
  template Var<T> make_op<T>(Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>);      \
  template void backward<T>(const Var<T>&);

OBJCOMP_INSTANTIATE(float)
OBJCOMP_INSTANTIATE(double)

}  // namespace objcomp::nn
