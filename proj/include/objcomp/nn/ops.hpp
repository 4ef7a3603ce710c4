#pragma once

#include <vector>

#include "objcomp/nn/autograd.hpp"

// Differentiable operations over Var<T>. Layouts:
//   feature maps  [N, C, H, W]
//   sequences     [N, L, D]
namespace objcomp::nn {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

template <typename T> Var<T> silu(const Var<T>& x);
/// tanh approximation.
template <typename T> Var<T> gelu(const Var<T>& x);

/// y = x W^T + b over the last axis. x [..., in], W [out, in], b [out] or null.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Length resampling along the token axis, shared across channels:
/// y[n, o, d] = sum_i K[o, i] x[n, i, d] + b[o].
template <typename T> Var<T> token_mix(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias);

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps = T(1e-5));

/// Square-kernel 2D convolution. weight [Cout, Cin, k, k], bias [Cout] or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

template <typename T> Var<T> upsample_nearest2(const Var<T>& x);
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

/// [N, C, H, W] -> [N, H*W, C]
template <typename T> Var<T> to_tokens(const Var<T>& x);
/// [N, H*W, C] -> [N, C, H, W]
template <typename T> Var<T> from_tokens(const Var<T>& x, int height, int width);

/// x [N, C, H, W] + v [N, C] broadcast over space.
template <typename T> Var<T> add_channel_vector(const Var<T>& x, const Var<T>& v);
/// x [N, L, D] + p [L, D] broadcast over batch.
template <typename T> Var<T> add_positional(const Var<T>& x, const Var<T>& p);
/// x [N, L, D] -> [N, L+1, D] with `token` [D] at position 0.
template <typename T> Var<T> prepend_token(const Var<T>& x, const Var<T>& token);
/// [N, L, D] -> [N, D]
template <typename T> Var<T> select_token(const Var<T>& x, int index);

/// [N, C, S, S] -> [N, (S/p)^2, C*p*p], patches in raster order.
template <typename T> Var<T> patchify(const Var<T>& x, int patch);

/// Row gather: table [V, D], ids of length N*L -> [N, L, D].
template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& ids, int batch, int length);

/// Scaled dot-product attention with heads split along the last axis.
/// q [N, Lq, D], k and v [N, Lk, D] -> [N, Lq, D]. Logits scaled by 1/sqrt(D/heads).
template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads);

/// Attention probabilities [N, heads, Lq, Lk] for the same computation (no graph).
template <typename T>
Tensor<T> attention_probabilities(const Tensor<T>& q, const Tensor<T>& k, int heads);

/// mean((a - b)^2)
template <typename T> Var<T> mse_loss(const Var<T>& a, const Var<T>& b);
/// mean(|a - b|)
template <typename T> Var<T> l1_loss(const Var<T>& a, const Var<T>& b);
/// mean(a^2)
template <typename T> Var<T> mean_square(const Var<T>& a);

}  // namespace objcomp::nn
