#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "objcomp/encoders.hpp"
#include "objcomp/image.hpp"
#include "objcomp/nn/layers.hpp"
#include "objcomp/train_schedule.hpp"

namespace objcomp::adaptor {

/// Visual token sequence -> text-shaped conditioning sequence.
struct AdaptorConfig {
  int in_len = 17;
  int out_len = 8;
  int in_dim = 64;
  int out_dim = 48;
  int attn_layers = 1;
  int attn_heads = 8;
  std::uint64_t seed = 99;

  static AdaptorConfig desk() { return {}; }
  /// 257x1024 -> 77x768, one attention layer with 8 heads.
  static AdaptorConfig full_scale() { return {257, 77, 1024, 768, 1, 8, 99}; }
  static AdaptorConfig for_encoders(const encoders::EncoderConfig& enc);

  void validate() const;
  nlohmann::json to_json() const;
  static AdaptorConfig from_json(const nlohmann::json& j);
};

/// Length-mapping conv, then dimension-mapping MLP, then attention blocks.
template <typename T>
class Adaptor {
 public:
  explicit Adaptor(const AdaptorConfig& config);

  /// [N, in_len, in_dim] -> [N, out_len, out_dim]
  nn::Var<T> forward(const nn::Var<T>& visual) const;
  /// Accepts [in_len, in_dim] or [N, in_len, in_dim]; returns the same rank.
  nn::Tensor<T> apply(const nn::Tensor<T>& visual) const;

  const AdaptorConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  // Exposed for tests that pin weights.
  nn::Var<T> conv_kernel, conv_bias;
  nn::Linear<T> mlp_in, mlp_out;
  std::vector<nn::AttentionBlock<T>> blocks;

 private:
  AdaptorConfig config_;
  nn::ParamSet<T> params_;
};

/// Mean absolute difference over all entries.
template <typename T>
nn::Var<T> loss_dist(const nn::Var<T>& predicted, const nn::Var<T>& target);

struct ImageCaptionPair {
  Image image;
  std::string caption;
};

struct StageResult {
  LossCurve curve;
  long steps = 0;
};

using ProgressFn = std::function<void(long step, double loss)>;

/// Distance pretraining against frozen text embeddings. Only adaptor weights
/// are updated; throws TrainingError on a non-finite loss.
StageResult train_stage1(Adaptor<float>& adaptor, const encoders::VisualEncoder<float>& visual,
                         const encoders::TextEncoder<float>& text, const std::vector<ImageCaptionPair>& pairs,
                         const TrainSchedule& schedule, const ProgressFn& progress = {});

extern template class Adaptor<float>;
extern template class Adaptor<double>;

}  // namespace objcomp::adaptor
