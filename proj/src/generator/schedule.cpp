#include "objcomp/generator/schedule.hpp"

#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::generator {

DiffusionSchedule::DiffusionSchedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("diffusion schedule needs at least one step");
  if (!(beta_start > 0 && beta_start < beta_end && beta_end < 1)) {
    throw ConfigError("diffusion betas must satisfy 0 < start < end < 1");
  }
  betas_.resize(steps);
  alpha_bars_.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    betas_[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    prod *= 1.0 - betas_[i];
    alpha_bars_[i] = prod;
  }
}

std::vector<int> DiffusionSchedule::respaced(int count) const {
  const int total = steps();
  if (count < 1 || count > total) {
    throw ConfigError("sampling steps must be in [1, " + std::to_string(total) + "], got " + std::to_string(count));
  }
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) {
    out[i] = total - static_cast<int>(std::llround(static_cast<double>(i) * total / count));
  }
  return out;
}

template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, const nn::Tensor<T>& eps, double alpha_bar) {
  nn::check_shape(eps.shape(), x0.shape(), "q_sample noise");
  const T a = static_cast<T>(std::sqrt(alpha_bar));
  const T b = static_cast<T>(std::sqrt(1.0 - alpha_bar));
  nn::Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, const nn::Tensor<T>& eps, int t, const DiffusionSchedule& schedule) {
  if (t < 1 || t > schedule.steps()) {
    throw ConfigError("q_sample timestep " + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps()) +
                      "]");
  }
  return q_sample(x0, eps, schedule.alpha_bar(t));
}

Image blend(const Image& a, const Image& b, const Image& mask) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ShapeError("blend: image shapes differ");
  }
  if (mask.width != a.width || mask.height != a.height || mask.channels != 1) {
    throw ShapeError("blend: mask must be single-channel and match the images");
  }
  Image out = b;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask.at(x, y, 0) >= 0.5f) continue;
      for (int c = 0; c < a.channels; ++c) out.at(x, y, c) = a.at(x, y, c);
    }
  return out;
}

template nn::Tensor<float> q_sample<float>(const nn::Tensor<float>&, const nn::Tensor<float>&, double);
template nn::Tensor<double> q_sample<double>(const nn::Tensor<double>&, const nn::Tensor<double>&, double);
template nn::Tensor<float> q_sample<float>(const nn::Tensor<float>&, const nn::Tensor<float>&, int,
                                           const DiffusionSchedule&);
template nn::Tensor<double> q_sample<double>(const nn::Tensor<double>&, const nn::Tensor<double>&, int,
                                             const DiffusionSchedule&);

}  // namespace objcomp::generator
