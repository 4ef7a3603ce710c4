#include "objcomp/generator/cross_attention.hpp"

#include "objcomp/errors.hpp"

namespace objcomp::generator {

template <typename T>
CrossAttentionParams<T>::CrossAttentionParams(nn::ParamSet<T>& ps, const std::string& name, int query_dim_,
                                              int context_dim_, int dim_, int heads_, Rng& rng)
    : heads(heads_), dim(dim_), query_dim(query_dim_), context_dim(context_dim_) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError(name + ": " + std::to_string(heads) + " heads do not divide dimension " + std::to_string(dim));
  }
  w_q = nn::Linear<T>(ps, name + ".w_q", query_dim, dim, rng, false);
  w_k = nn::Linear<T>(ps, name + ".w_k", context_dim, dim, rng, false);
  w_v = nn::Linear<T>(ps, name + ".w_v", context_dim, dim, rng, false);
}

namespace {

void check_inputs(const nn::Shape& ex, const nn::Shape& e, int query_dim, int context_dim) {
  if (ex.size() != 3 || ex[2] != query_dim) {
    throw ShapeError("cross_attention: query features must be [N, L, " + std::to_string(query_dim) + "], got " +
                     nn::shape_string(ex));
  }
  if (e.size() != 3 || e[2] != context_dim || e[0] != ex[0]) {
    throw ShapeError("cross_attention: conditioning must be [" + std::to_string(ex[0]) + ", L, " +
                     std::to_string(context_dim) + "], got " + nn::shape_string(e));
  }
}

}  // namespace

template <typename T>
nn::Var<T> cross_attention(const nn::Var<T>& ex, const nn::Var<T>& e, const CrossAttentionParams<T>& p) {
  check_inputs(ex->shape(), e->shape(), p.query_dim, p.context_dim);
  return nn::multi_head_attention(p.w_q(ex), p.w_k(e), p.w_v(e), p.heads);
}

template <typename T>
nn::Tensor<T> cross_attention_weights(const nn::Tensor<T>& ex, const nn::Tensor<T>& e,
                                      const CrossAttentionParams<T>& p) {
  check_inputs(ex.shape(), e.shape(), p.query_dim, p.context_dim);
  const auto q = p.w_q(nn::constant(ex))->value;
  const auto k = p.w_k(nn::constant(e))->value;
  return nn::attention_probabilities(q, k, p.heads);
}

template struct CrossAttentionParams<float>;
template struct CrossAttentionParams<double>;
template nn::Var<float> cross_attention<float>(const nn::Var<float>&, const nn::Var<float>&,
                                               const CrossAttentionParams<float>&);
template nn::Var<double> cross_attention<double>(const nn::Var<double>&, const nn::Var<double>&,
                                                 const CrossAttentionParams<double>&);
template nn::Tensor<float> cross_attention_weights<float>(const nn::Tensor<float>&, const nn::Tensor<float>&,
                                                          const CrossAttentionParams<float>&);
template nn::Tensor<double> cross_attention_weights<double>(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                                            const CrossAttentionParams<double>&);

}  // namespace objcomp::generator
