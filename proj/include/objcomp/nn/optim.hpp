#pragma once

#include <vector>

#include "objcomp/nn/layers.hpp"

namespace objcomp::nn {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;
};

/// Adam over every trainable parameter of a ParamSet.
template <typename T>
class Adam {
 public:
  Adam(ParamSet<T>& params, AdamOptions options);

  /// Applies one update from the accumulated gradients, then clears them.
  /// Returns the pre-clip global gradient norm.
  double step();
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  long steps_taken() const { return step_; }

 private:
  ParamSet<T>& params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace objcomp::nn
