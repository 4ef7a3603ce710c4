#pragma once

#include <vector>

#include "objcomp/image.hpp"
#include "objcomp/nn/tensor.hpp"

namespace objcomp::generator {

/// Linear-beta DDPM schedule. Timesteps are 1-based; t = 0 means clean data.
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  /// Cumulative product of alphas up to t; 1 at t = 0.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_.at(t - 1); }

  /// Evenly spaced descending timesteps from T, `count` of them, ending at >= 1.
  std::vector<int> respaced(int count) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps, elementwise.
template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, const nn::Tensor<T>& eps, double alpha_bar);
template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, const nn::Tensor<T>& eps, int t, const DiffusionSchedule& schedule);

/// a inside the hole (M = 0), b elsewhere.
Image blend(const Image& a, const Image& b, const Image& mask);

}  // namespace objcomp::generator
