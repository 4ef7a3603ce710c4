#include "objcomp/nn/layers.hpp"

#include <cmath>
#include <cstring>

namespace objcomp::nn {

template <typename T>
Var<T> ParamSet<T>::create(const std::string& name, Shape shape, Init init, Rng& rng, double scale) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor<T> value(std::move(shape));
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      value.fill(T(1));
      break;
    case Init::Uniform:
      // Drawn in double so float and double models share the same init.
      for (auto& v : value.storage()) v = static_cast<T>(rng.uniform(-scale, scale));
      break;
    case Init::Normal:
      for (auto& v : value.storage()) v = static_cast<T>(scale * rng.normal());
      break;
  }
  auto var = variable<T>(std::move(value), true);
  entries_.emplace_back(name, var);
  return var;
}

template <typename T>
Var<T> ParamSet<T>::find(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  return nullptr;
}

template <typename T>
std::size_t ParamSet<T>::count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.second->value.numel();
  return total;
}

template <typename T>
void ParamSet<T>::set_trainable(bool trainable) {
  for (auto& e : entries_) {
    e.second->requires_grad = trainable;
    e.second->zero_grad();
  }
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& e : entries_) e.second->zero_grad();
}

template <typename T>
std::uint64_t ParamSet<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& e : entries_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(e.second->value.data());
    const std::size_t n = e.second->value.numel() * sizeof(T);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename T>
Linear<T>::Linear(ParamSet<T>& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = ps.create(name + ".weight", {out, in}, Init::Uniform, rng, bound);
  if (with_bias) bias = ps.create(name + ".bias", {out}, Init::Uniform, rng, bound);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamSet<T>& ps, const std::string& name, int dim, Rng& rng) {
  gamma = ps.create(name + ".gamma", {dim}, Init::Ones, rng);
  beta = ps.create(name + ".beta", {dim}, Init::Zeros, rng);
}

template <typename T>
GroupNorm<T>::GroupNorm(ParamSet<T>& ps, const std::string& name, int channels, int groups_, Rng& rng)
    : groups(groups_) {
  gamma = ps.create(name + ".gamma", {channels}, Init::Ones, rng);
  beta = ps.create(name + ".beta", {channels}, Init::Zeros, rng);
}

template <typename T>
Conv2d<T>::Conv2d(ParamSet<T>& ps, const std::string& name, int in, int out, int kernel, int stride_, int padding_,
                  Rng& rng)
    : stride(stride_), padding(padding_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = ps.create(name + ".weight", {out, in, kernel, kernel}, Init::Uniform, rng, bound);
  bias = ps.create(name + ".bias", {out}, Init::Uniform, rng, bound);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamSet<T>& ps, const std::string& name, int dim, int context_dim,
                                          int heads_, Rng& rng)
    : heads(heads_) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError(name + ": " + std::to_string(heads) + " heads do not divide dimension " + std::to_string(dim));
  }
  to_q = Linear<T>(ps, name + ".to_q", dim, dim, rng, false);
  to_k = Linear<T>(ps, name + ".to_k", context_dim, dim, rng, false);
  to_v = Linear<T>(ps, name + ".to_v", context_dim, dim, rng, false);
  to_out = Linear<T>(ps, name + ".to_out", dim, dim, rng);
}

template <typename T>
Var<T> MultiHeadAttention<T>::operator()(const Var<T>& x, const Var<T>& context) const {
  return to_out(multi_head_attention(to_q(x), to_k(context), to_v(context), heads));
}

template <typename T>
FeedForward<T>::FeedForward(ParamSet<T>& ps, const std::string& name, int dim, int hidden, Rng& rng) {
  fc1 = Linear<T>(ps, name + ".fc1", dim, hidden, rng);
  fc2 = Linear<T>(ps, name + ".fc2", hidden, dim, rng);
}

template <typename T>
AttentionBlock<T>::AttentionBlock(ParamSet<T>& ps, const std::string& name, int dim, int heads, Rng& rng) {
  norm1 = LayerNorm<T>(ps, name + ".norm1", dim, rng);
  attn = MultiHeadAttention<T>(ps, name + ".attn", dim, dim, heads, rng);
  norm2 = LayerNorm<T>(ps, name + ".norm2", dim, rng);
  ff = FeedForward<T>(ps, name + ".ff", dim, 4 * dim, rng);
}

template <typename T>
Var<T> AttentionBlock<T>::operator()(const Var<T>& x) const {
  auto h = norm1(x);
  auto y = add(x, attn(h, h));
  return add(y, ff(norm2(y)));
}

template class ParamSet<float>;
template class ParamSet<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct GroupNorm<float>;
template struct GroupNorm<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct AttentionBlock<float>;
template struct AttentionBlock<double>;

}  // namespace objcomp::nn
