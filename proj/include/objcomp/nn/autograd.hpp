#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "objcomp/nn/tensor.hpp"

namespace objcomp::nn {

/// A value in a reverse-mode computation graph.
///
/// Leaves are created with `variable()` (parameters, trainable when
/// `requires_grad`) or `constant()` (data). Every op output records its inputs
/// and a backward closure only when at least one input requires a gradient, so
/// pure inference builds no graph at all.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backward_fn;

  const Shape& shape() const { return value.shape(); }
  bool has_grad() const { return !grad.empty(); }

  /// Adds `g` into this node's gradient buffer, allocating it on first use.
  void accumulate(const Tensor<T>& g);
  /// Returns the gradient buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer();
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value);

template <typename T>
Var<T> variable(Tensor<T> value, bool requires_grad = true);

/// Builds an op output. Inputs that do not require grad are dropped from the
/// graph; if none remain, the result is a constant.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn);

/// Runs reverse-mode accumulation from a scalar `root` (seed gradient 1).
template <typename T>
void backward(const Var<T>& root);

}  // namespace objcomp::nn
