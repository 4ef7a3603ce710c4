#include "objcomp/nn/optim.hpp"

#include <cmath>

namespace objcomp::nn {

template <typename T>
Adam<T>::Adam(ParamSet<T>& params, AdamOptions options) : params_(params), options_(options) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.second->value.numel(), 0.0);
    v_.emplace_back(e.second->value.numel(), 0.0);
  }
}

template <typename T>
double Adam<T>::step() {
  const auto& entries = params_.entries();
  double sq = 0.0;
  for (const auto& e : entries) {
    if (!e.second->requires_grad || !e.second->has_grad()) continue;
    for (T g : e.second->grad.values()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = (options_.clip_norm > 0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++step_;
  const double lr = options_.learning_rate;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& node = *entries[p].second;
    if (!node.requires_grad || !node.has_grad()) continue;
    auto& m = m_[p];
    auto& v = v_[p];
    T* w = node.value.data();
    const T* g = node.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * clip;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
  params_.zero_grad();
  return norm;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace objcomp::nn
