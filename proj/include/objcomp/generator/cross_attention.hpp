#pragma once

#include <string>

#include "objcomp/nn/layers.hpp"

namespace objcomp::generator {

/// Query/key/value projections of the conditioning attention. W_Q is
/// [d, d_x], W_K and W_V are [d, d_e]; stored as bias-free linear layers.
template <typename T>
struct CrossAttentionParams {
  nn::Linear<T> w_q, w_k, w_v;
  int heads = 1;
  int dim = 0;
  int query_dim = 0;
  int context_dim = 0;

  CrossAttentionParams() = default;
  CrossAttentionParams(nn::ParamSet<T>& ps, const std::string& name, int query_dim, int context_dim, int dim,
                       int heads, Rng& rng);
};

/// Softmax((W_Q E_x)(W_K E)^T / sqrt(d_head)) (W_V E).
/// E_x [N, Lq, d_x], E [N, Lk, d_e] -> [N, Lq, d].
template <typename T>
nn::Var<T> cross_attention(const nn::Var<T>& ex, const nn::Var<T>& e, const CrossAttentionParams<T>& params);

/// Attention matrix [N, heads, Lq, Lk] of the same computation.
template <typename T>
nn::Tensor<T> cross_attention_weights(const nn::Tensor<T>& ex, const nn::Tensor<T>& e,
                                      const CrossAttentionParams<T>& params);

}  // namespace objcomp::generator
