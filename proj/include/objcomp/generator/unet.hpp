#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "objcomp/generator/cross_attention.hpp"
#include "objcomp/nn/layers.hpp"

namespace objcomp::generator {

struct UNetConfig {
  int image_size = 64;
  int base_channels = 16;
  std::vector<int> channel_mult = {1, 2, 4};
  /// Feature-map sizes that get a spatial transformer.
  std::vector<int> attention_resolutions = {16};
  int context_dim = 48;
  int heads = 4;
  int groups = 8;
  int in_channels = 7;
  int out_channels = 3;
  std::uint64_t seed = 7;

  int levels() const { return static_cast<int>(channel_mult.size()); }
  int time_dim() const { return 4 * base_channels; }
  void validate() const;
  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

/// Sinusoidal embedding of integer timesteps, [N, dim].
template <typename T>
nn::Tensor<T> timestep_embedding(const std::vector<int>& t, int dim);

template <typename T>
struct ResBlock {
  nn::GroupNorm<T> norm1, norm2;
  nn::Conv2d<T> conv1, conv2, skip;
  nn::Linear<T> time_proj;
  bool has_skip = false;

  ResBlock() = default;
  ResBlock(nn::ParamSet<T>& ps, const std::string& name, int in, int out, int time_dim, int groups, Rng& rng);
  nn::Var<T> operator()(const nn::Var<T>& x, const nn::Var<T>& temb) const;
};

/// Token-space block at one resolution: self-attention, cross-attention to the
/// conditioning sequence, feed-forward; residual around the whole block.
template <typename T>
struct SpatialTransformer {
  nn::GroupNorm<T> norm;
  nn::Linear<T> proj_in, proj_out;
  nn::LayerNorm<T> ln1, ln2, ln3;
  nn::MultiHeadAttention<T> self_attn;
  CrossAttentionParams<T> cross;
  nn::Linear<T> cross_out;
  nn::FeedForward<T> ff;

  SpatialTransformer() = default;
  SpatialTransformer(nn::ParamSet<T>& ps, const std::string& name, int channels, int context_dim, int heads,
                     int groups, Rng& rng);
  nn::Var<T> operator()(const nn::Var<T>& x, const nn::Var<T>& context) const;
};

/// Noise-prediction U-Net over the 7-channel input
/// [noisy image (3), masked background (3), mask (1)].
template <typename T>
class UNet {
 public:
  explicit UNet(const UNetConfig& config);

  /// x [N, in_channels, S, S], t length N, context [N, L, context_dim]
  /// -> predicted noise [N, out_channels, S, S].
  nn::Var<T> forward(const nn::Var<T>& x, const std::vector<int>& t, const nn::Var<T>& context) const;

  const UNetConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

 private:
  struct Level {
    ResBlock<T> down;
    bool attn = false;
    SpatialTransformer<T> down_attn;
    nn::Conv2d<T> downsample;
    ResBlock<T> up;
    SpatialTransformer<T> up_attn;
  };

  UNetConfig config_;
  nn::ParamSet<T> params_;
  nn::Linear<T> time1_, time2_;
  nn::Conv2d<T> conv_in_;
  std::vector<Level> levels_;
  ResBlock<T> mid1_, mid2_;
  SpatialTransformer<T> mid_attn_;
  nn::GroupNorm<T> norm_out_;
  nn::Conv2d<T> conv_out_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace objcomp::generator
