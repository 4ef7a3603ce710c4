#include "objcomp/adaptor.hpp"

#include <cmath>

#include "objcomp/errors.hpp"
#include "objcomp/nn/optim.hpp"

namespace objcomp::adaptor {

using nn::Tensor;
using nn::Var;

AdaptorConfig AdaptorConfig::for_encoders(const encoders::EncoderConfig& enc) {
  AdaptorConfig c;
  c.in_len = enc.visual_tokens();
  c.in_dim = enc.visual_dim;
  c.out_len = enc.text_len;
  c.out_dim = enc.text_dim;
  return c;
}

void AdaptorConfig::validate() const {
  if (in_len <= 0 || out_len <= 0 || in_dim <= 0 || out_dim <= 0) throw ConfigError("adaptor sizes must be positive");
  if (attn_layers < 0) throw ConfigError("adaptor attn_layers must be >= 0");
  if (attn_heads <= 0 || out_dim % attn_heads != 0) {
    throw ConfigError("adaptor attn_heads " + std::to_string(attn_heads) + " must divide out_dim " +
                      std::to_string(out_dim));
  }
}

nlohmann::json AdaptorConfig::to_json() const {
  return {{"in_len", in_len},           {"out_len", out_len},       {"in_dim", in_dim}, {"out_dim", out_dim},
          {"attn_layers", attn_layers}, {"attn_heads", attn_heads}, {"seed", seed}};
}

AdaptorConfig AdaptorConfig::from_json(const nlohmann::json& j) {
  AdaptorConfig c;
  c.in_len = j.value("in_len", c.in_len);
  c.out_len = j.value("out_len", c.out_len);
  c.in_dim = j.value("in_dim", c.in_dim);
  c.out_dim = j.value("out_dim", c.out_dim);
  c.attn_layers = j.value("attn_layers", c.attn_layers);
  c.attn_heads = j.value("attn_heads", c.attn_heads);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

template <typename T>
Adaptor<T>::Adaptor(const AdaptorConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.in_len));
  conv_kernel = params_.create("adaptor.conv.kernel", {config_.out_len, config_.in_len}, nn::Init::Uniform, rng, bound);
  conv_bias = params_.create("adaptor.conv.bias", {config_.out_len}, nn::Init::Uniform, rng, bound);
  mlp_in = nn::Linear<T>(params_, "adaptor.mlp.fc1", config_.in_dim, config_.out_dim, rng);
  mlp_out = nn::Linear<T>(params_, "adaptor.mlp.fc2", config_.out_dim, config_.out_dim, rng);
  for (int i = 0; i < config_.attn_layers; ++i) {
    blocks.emplace_back(params_, "adaptor.block" + std::to_string(i), config_.out_dim, config_.attn_heads, rng);
  }
}

template <typename T>
Var<T> Adaptor<T>::forward(const Var<T>& visual) const {
  const auto& s = visual->shape();
  if (s.size() != 3 || s[1] != config_.in_len || s[2] != config_.in_dim) {
    throw ShapeError("adaptor input: expected [N, " + std::to_string(config_.in_len) + ", " +
                     std::to_string(config_.in_dim) + "], got " + nn::shape_string(s));
  }
  Var<T> x = nn::token_mix(visual, conv_kernel, conv_bias);
  x = mlp_out(nn::gelu(mlp_in(x)));
  for (const auto& block : blocks) x = block(x);
  return x;
}

template <typename T>
Tensor<T> Adaptor<T>::apply(const Tensor<T>& visual) const {
  if (visual.rank() == 2) {
    auto out = forward(nn::constant(visual.reshaped({1, visual.dim(0), visual.dim(1)})))->value;
    return out.reshaped({config_.out_len, config_.out_dim});
  }
  return forward(nn::constant(visual))->value;
}

template <typename T>
Var<T> loss_dist(const Var<T>& predicted, const Var<T>& target) {
  return nn::l1_loss(predicted, target);
}

namespace {

Tensor<float> gather(const Tensor<float>& all, const std::vector<int>& idx) {
  nn::Shape shape = all.shape();
  const std::size_t per = all.numel() / shape[0];
  shape[0] = static_cast<int>(idx.size());
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(all.data() + idx[i] * per, all.data() + (idx[i] + 1) * per, out.data() + i * per);
  }
  return out;
}

}  // namespace

StageResult train_stage1(Adaptor<float>& adaptor, const encoders::VisualEncoder<float>& visual,
                         const encoders::TextEncoder<float>& text, const std::vector<ImageCaptionPair>& pairs,
                         const TrainSchedule& schedule, const ProgressFn& progress) {
  if (pairs.empty()) throw ConfigError("stage 1: no training pairs");
  if (schedule.batch_size <= 0) throw ConfigError("stage 1: batch_size must be positive");
  std::vector<Image> images;
  std::vector<std::string> captions;
  for (const auto& p : pairs) {
    images.push_back(p.image);
    captions.push_back(p.caption);
  }
  // Encoders are frozen, so their outputs are computed once.
  const Tensor<float> visual_all = visual.encode_batch(images);
  const Tensor<float> text_all = text.encode_batch(captions);

  adaptor.params().set_trainable(true);
  nn::Adam<float> opt(adaptor.params(), {.learning_rate = schedule.learning_rate});
  EpochSampler sampler(static_cast<int>(pairs.size()), Rng::derive(schedule.seed, 11));
  StageResult result;
  for (long step = 1; step <= schedule.steps; ++step) {
    const auto idx = sampler.next(schedule.batch_size);
    auto pred = adaptor.forward(nn::constant(gather(visual_all, idx)));
    auto loss = loss_dist(pred, nn::constant(gather(text_all, idx)));
    const double value = loss->value[0];
    if (!std::isfinite(value)) {
      throw TrainingError("stage 1: non-finite loss at step " + std::to_string(step) + " (learning rate " +
                          std::to_string(schedule.rate_at(step - 1)) + ")");
    }
    nn::backward(loss);
    opt.set_learning_rate(schedule.rate_at(step - 1));
    opt.step();
    result.curve.emplace_back(step, value);
    if (progress) progress(step, value);
  }
  result.steps = schedule.steps;
  return result;
}

template class Adaptor<float>;
template class Adaptor<double>;
template Var<float> loss_dist<float>(const Var<float>&, const Var<float>&);
template Var<double> loss_dist<double>(const Var<double>&, const Var<double>&);

}  // namespace objcomp::adaptor
