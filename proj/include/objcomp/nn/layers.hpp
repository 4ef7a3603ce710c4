#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "objcomp/errors.hpp"
#include "objcomp/nn/ops.hpp"
#include "objcomp/rng.hpp"

namespace objcomp::nn {

enum class Init { Zeros, Ones, Uniform, Normal };

/// Ordered registry of named parameters belonging to one model.
template <typename T>
class ParamSet {
 public:
  /// `scale` is the half-width for Uniform or the stddev for Normal.
  Var<T> create(const std::string& name, Shape shape, Init init, Rng& rng, double scale = 0.0);

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }
  Var<T> find(const std::string& name) const;
  std::size_t count() const;

  void set_trainable(bool trainable);
  void zero_grad();
  /// FNV-1a over the raw parameter bytes, in registration order.
  std::uint64_t checksum() const;

  /// Copies values from a set with identical names and shapes (any scalar type).
  template <typename U>
  void copy_from(const ParamSet<U>& other);

 private:
  std::vector<std::pair<std::string, Var<T>>> entries_;
};

template <typename T>
struct Linear {
  Var<T> weight, bias;
  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias = true);
  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamSet<T>& ps, const std::string& name, int dim, Rng& rng);
  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma, beta); }
};

template <typename T>
struct GroupNorm {
  Var<T> gamma, beta;
  int groups = 1;
  GroupNorm() = default;
  GroupNorm(ParamSet<T>& ps, const std::string& name, int channels, int groups, Rng& rng);
  Var<T> operator()(const Var<T>& x) const { return group_norm(x, gamma, beta, groups); }
};

template <typename T>
struct Conv2d {
  Var<T> weight, bias;
  int stride = 1, padding = 0;
  Conv2d() = default;
  Conv2d(ParamSet<T>& ps, const std::string& name, int in, int out, int kernel, int stride, int padding, Rng& rng);
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
};

/// Multi-head attention with separate query/key/value/output projections.
/// Self-attention when `context` is the query input.
template <typename T>
struct MultiHeadAttention {
  Linear<T> to_q, to_k, to_v, to_out;
  int heads = 1;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamSet<T>& ps, const std::string& name, int dim, int context_dim, int heads, Rng& rng);
  Var<T> operator()(const Var<T>& x, const Var<T>& context) const;
};

template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;
  FeedForward() = default;
  FeedForward(ParamSet<T>& ps, const std::string& name, int dim, int hidden, Rng& rng);
  Var<T> operator()(const Var<T>& x) const { return fc2(gelu(fc1(x))); }
};

/// Pre-norm transformer block: x + attn(ln(x)), then x + ff(ln(x)).
template <typename T>
struct AttentionBlock {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ff;
  AttentionBlock() = default;
  AttentionBlock(ParamSet<T>& ps, const std::string& name, int dim, int heads, Rng& rng);
  Var<T> operator()(const Var<T>& x) const;
};

template <typename T>
template <typename U>
void ParamSet<T>::copy_from(const ParamSet<U>& other) {
  const auto& src = other.entries();
  if (src.size() != entries_.size()) throw ShapeError("ParamSet::copy_from: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != entries_[i].first) {
      throw ShapeError("ParamSet::copy_from: name mismatch " + src[i].first + " vs " + entries_[i].first);
    }
    check_shape(src[i].second->shape(), entries_[i].second->shape(), "ParamSet::copy_from " + src[i].first);
    entries_[i].second->value = src[i].second->value.template cast<T>();
  }
}

}  // namespace objcomp::nn
