#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "objcomp/image.hpp"
#include "objcomp/nn/layers.hpp"

namespace objcomp::encoders {

/// Shapes of the two frozen encoders. Defaults are the desk preset;
/// `full_scale()` gives the full-size token shapes (257x1024 visual, 77x768 text).
struct EncoderConfig {
  int image_size = 32;
  int patch_size = 8;
  int visual_dim = 64;
  int visual_depth = 2;
  int visual_depth_keep = 1;
  int visual_heads = 4;
  int text_len = 8;
  int text_dim = 48;
  int text_depth = 2;
  int text_heads = 4;
  int vocab_hash_size = 256;
  /// Shared space for the pooled similarity features.
  int embed_dim = 48;
  std::uint64_t seed = 1234;

  static EncoderConfig desk() { return {}; }
  static EncoderConfig full_scale();

  int visual_tokens() const;
  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// Lower-cased whitespace tokens hashed into vocab_hash_size buckets, with a
/// leading start token and trailing pad ids, truncated/padded to text_len.
std::vector<int> tokenize(const std::string& caption, const EncoderConfig& config);

/// Image [H, W, C] in [0, 1] -> model tensor [3, S, S] in [-1, 1]. Alpha is
/// matted onto mid-gray; non-square inputs are padded to square first.
template <typename T>
nn::Tensor<T> image_to_encoder_input(const Image& img, int size);

/// Patch-embedding transformer standing in for a pretrained image tower.
/// Only the first visual_depth_keep blocks are instantiated and run.
template <typename T>
class VisualEncoder {
 public:
  explicit VisualEncoder(const EncoderConfig& config);

  /// [N, 3, S, S] -> [N, (S/p)^2 + 1, visual_dim]
  nn::Var<T> forward(const nn::Var<T>& images) const;
  /// Single image -> [(S/p)^2 + 1, visual_dim]
  nn::Tensor<T> encode(const Image& img) const;
  /// Batch of images -> [N, L, D]
  nn::Tensor<T> encode_batch(const std::vector<Image>& imgs) const;
  /// Class-token output [D] (pre-projection).
  std::vector<double> class_token(const Image& img) const;
  /// Unit-norm projected class token [embed_dim].
  std::vector<double> image_feature(const Image& img) const;

  const EncoderConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

 private:
  EncoderConfig config_;
  nn::ParamSet<T> params_;
  nn::Linear<T> patch_embed_;
  nn::Var<T> class_embedding_, positional_;
  nn::LayerNorm<T> ln_pre_, ln_post_;
  std::vector<nn::AttentionBlock<T>> blocks_;
  nn::Linear<T> projection_;
};

/// Hashed-vocabulary transformer standing in for a pretrained text tower.
template <typename T>
class TextEncoder {
 public:
  explicit TextEncoder(const EncoderConfig& config);

  /// ids of length N*text_len -> [N, text_len, text_dim]
  nn::Var<T> forward(const std::vector<int>& ids, int batch) const;
  /// Caption -> [text_len, text_dim]. Throws on an empty caption.
  nn::Tensor<T> encode(const std::string& caption) const;
  nn::Tensor<T> encode_batch(const std::vector<std::string>& captions) const;
  /// Unit-norm projection of the start-token output [embed_dim].
  std::vector<double> caption_feature(const std::string& caption) const;

  const EncoderConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  int start_id() const { return config_.vocab_hash_size; }
  int pad_id() const { return config_.vocab_hash_size + 1; }

 private:
  EncoderConfig config_;
  nn::ParamSet<T> params_;
  nn::Var<T> token_embedding_, positional_;
  std::vector<nn::AttentionBlock<T>> blocks_;
  nn::LayerNorm<T> ln_final_;
  nn::Linear<T> projection_;
};

extern template class VisualEncoder<float>;
extern template class VisualEncoder<double>;
extern template class TextEncoder<float>;
extern template class TextEncoder<double>;

}  // namespace objcomp::encoders
