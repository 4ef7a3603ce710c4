#include "objcomp/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "objcomp/errors.hpp"

namespace objcomp::encoders {

using nn::Init;
using nn::Tensor;
using nn::Var;

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.image_size = 224;
  c.patch_size = 14;
  c.visual_dim = 1024;
  c.visual_depth = 24;
  c.visual_depth_keep = 12;
  c.visual_heads = 16;
  c.text_len = 77;
  c.text_dim = 768;
  c.text_depth = 12;
  c.text_heads = 12;
  c.vocab_hash_size = 49408;
  c.embed_dim = 768;
  return c;
}

int EncoderConfig::visual_tokens() const {
  const int side = image_size / patch_size;
  return side * side + 1;
}

void EncoderConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw ConfigError("encoder image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (visual_depth_keep < 1 || visual_depth_keep > visual_depth) {
    throw ConfigError("encoder visual_depth_keep must be in [1, visual_depth]");
  }
  if (visual_dim % visual_heads != 0) throw ConfigError("encoder visual_heads must divide visual_dim");
  if (text_dim % text_heads != 0) throw ConfigError("encoder text_heads must divide text_dim");
  if (text_len < 2) throw ConfigError("encoder text_len must be at least 2");
  if (vocab_hash_size < 1 || embed_dim < 1 || text_depth < 1) throw ConfigError("encoder sizes must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"image_size", image_size},     {"patch_size", patch_size},
          {"visual_dim", visual_dim},     {"visual_depth", visual_depth},
          {"visual_depth_keep", visual_depth_keep}, {"visual_heads", visual_heads},
          {"text_len", text_len},         {"text_dim", text_dim},
          {"text_depth", text_depth},     {"text_heads", text_heads},
          {"vocab_hash_size", vocab_hash_size}, {"embed_dim", embed_dim},
          {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.visual_dim = j.value("visual_dim", c.visual_dim);
  c.visual_depth = j.value("visual_depth", c.visual_depth);
  c.visual_depth_keep = j.value("visual_depth_keep", std::max(1, c.visual_depth / 2));
  c.visual_heads = j.value("visual_heads", c.visual_heads);
  c.text_len = j.value("text_len", c.text_len);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.text_depth = j.value("text_depth", c.text_depth);
  c.text_heads = j.value("text_heads", c.text_heads);
  c.vocab_hash_size = j.value("vocab_hash_size", c.vocab_hash_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<int> tokenize(const std::string& caption, const EncoderConfig& config) {
  std::vector<int> ids;
  ids.reserve(config.text_len);
  ids.push_back(config.vocab_hash_size);
  std::istringstream words(caption);
  std::string word;
  while (words >> word && static_cast<int>(ids.size()) < config.text_len) {
    std::uint32_t h = 2166136261u;
    for (char ch : word) {
      h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(ch)));
      h *= 16777619u;
    }
    ids.push_back(static_cast<int>(h % static_cast<std::uint32_t>(config.vocab_hash_size)));
  }
  while (static_cast<int>(ids.size()) < config.text_len) ids.push_back(config.vocab_hash_size + 1);
  return ids;
}

template <typename T>
Tensor<T> image_to_encoder_input(const Image& img, int size) {
  if (img.empty()) throw ShapeError("encoder input image is empty");
  Image rgb = img.channels == 4 ? Image(img.width, img.height, 3) : to_rgb(img);
  if (img.channels == 4) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const float a = img.at(x, y, 3);
        for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = a * img.at(x, y, c) + (1.0f - a) * 0.5f;
      }
  }
  if (rgb.width != rgb.height) {
    const int side = std::max(rgb.width, rgb.height);
    rgb = crop(rgb, -(side - rgb.width) / 2, -(side - rgb.height) / 2, side, side, 0.5f);
  }
  if (rgb.width != size) rgb = resize_bilinear(rgb, size, size);
  Tensor<T> out({3, size, size});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out[(static_cast<std::size_t>(c) * size + y) * size + x] = static_cast<T>(2.0f * rgb.at(x, y, c) - 1.0f);
  return out;
}

namespace {

std::vector<double> unit(const Tensor<double>& v) {
  double n = 0;
  for (double x : v.values()) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = n > 0 ? v[i] / n : 0.0;
  return out;
}

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
  return t.template cast<double>();
}

}  // namespace

template <typename T>
VisualEncoder<T>::VisualEncoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(Rng::derive(config_.seed, 1));
  const int d = config_.visual_dim;
  const int p = config_.patch_size;
  patch_embed_ = nn::Linear<T>(params_, "visual.patch_embed", 3 * p * p, d, rng);
  class_embedding_ = params_.create("visual.class_embedding", {d}, Init::Normal, rng, 1.0 / std::sqrt(double(d)));
  positional_ =
      params_.create("visual.positional", {config_.visual_tokens(), d}, Init::Normal, rng, 1.0 / std::sqrt(double(d)));
  ln_pre_ = nn::LayerNorm<T>(params_, "visual.ln_pre", d, rng);
  for (int i = 0; i < config_.visual_depth_keep; ++i) {
    blocks_.emplace_back(params_, "visual.block" + std::to_string(i), d, config_.visual_heads, rng);
  }
  ln_post_ = nn::LayerNorm<T>(params_, "visual.ln_post", d, rng);
  projection_ = nn::Linear<T>(params_, "visual.projection", d, config_.embed_dim, rng, false);
  params_.set_trainable(false);
}

template <typename T>
Var<T> VisualEncoder<T>::forward(const Var<T>& images) const {
  const auto& s = images->shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != config_.image_size || s[3] != config_.image_size) {
    throw ShapeError("visual encoder expects [N, 3, " + std::to_string(config_.image_size) + ", " +
                     std::to_string(config_.image_size) + "], got " + nn::shape_string(s));
  }
  Var<T> x = patch_embed_(nn::patchify(images, config_.patch_size));
  x = nn::prepend_token(x, class_embedding_);
  x = nn::add_positional(x, positional_);
  x = ln_pre_(x);
  for (const auto& block : blocks_) x = block(x);
  return ln_post_(x);
}

template <typename T>
Tensor<T> VisualEncoder<T>::encode(const Image& img) const {
  auto out = encode_batch({img});
  const int l = out.dim(1), d = out.dim(2);
  return out.reshaped({l, d});
}

template <typename T>
Tensor<T> VisualEncoder<T>::encode_batch(const std::vector<Image>& imgs) const {
  const int s = config_.image_size;
  const int n = static_cast<int>(imgs.size());
  Tensor<T> batch({n, 3, s, s});
  const std::size_t per = static_cast<std::size_t>(3) * s * s;
  for (int i = 0; i < n; ++i) {
    const auto one = image_to_encoder_input<T>(imgs[i], s);
    std::copy(one.data(), one.data() + per, batch.data() + i * per);
  }
  return forward(nn::constant(std::move(batch)))->value;
}

template <typename T>
std::vector<double> VisualEncoder<T>::class_token(const Image& img) const {
  const auto tokens = encode(img);
  std::vector<double> out(config_.visual_dim);
  for (int i = 0; i < config_.visual_dim; ++i) out[i] = static_cast<double>(tokens[i]);
  return out;
}

template <typename T>
std::vector<double> VisualEncoder<T>::image_feature(const Image& img) const {
  const auto tokens = encode(img);
  Tensor<T> cls({1, config_.visual_dim});
  std::copy(tokens.data(), tokens.data() + config_.visual_dim, cls.data());
  return unit(to_double(projection_(nn::constant(std::move(cls)))->value));
}

template <typename T>
TextEncoder<T>::TextEncoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(Rng::derive(config_.seed, 2));
  const int d = config_.text_dim;
  // Rows [0, V) are hashed words, then the start and pad embeddings.
  token_embedding_ =
      params_.create("text.token_embedding", {config_.vocab_hash_size + 2, d}, Init::Normal, rng, 1.0);
  positional_ = params_.create("text.positional", {config_.text_len, d}, Init::Normal, rng, 0.1);
  for (int i = 0; i < config_.text_depth; ++i) {
    blocks_.emplace_back(params_, "text.block" + std::to_string(i), d, config_.text_heads, rng);
  }
  ln_final_ = nn::LayerNorm<T>(params_, "text.ln_final", d, rng);
  projection_ = nn::Linear<T>(params_, "text.projection", d, config_.embed_dim, rng, false);
  params_.set_trainable(false);
}

template <typename T>
Var<T> TextEncoder<T>::forward(const std::vector<int>& ids, int batch) const {
  if (static_cast<int>(ids.size()) != batch * config_.text_len) {
    throw ShapeError("text encoder expects " + std::to_string(batch * config_.text_len) + " ids, got " +
                     std::to_string(ids.size()));
  }
  Var<T> x = nn::embedding(token_embedding_, ids, batch, config_.text_len);
  x = nn::add_positional(x, positional_);
  for (const auto& block : blocks_) x = block(x);
  return ln_final_(x);
}

template <typename T>
Tensor<T> TextEncoder<T>::encode(const std::string& caption) const {
  auto out = encode_batch({caption});
  return out.reshaped({config_.text_len, config_.text_dim});
}

template <typename T>
Tensor<T> TextEncoder<T>::encode_batch(const std::vector<std::string>& captions) const {
  std::vector<int> ids;
  for (const auto& c : captions) {
    if (c.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("text encoder: empty caption");
    const auto t = tokenize(c, config_);
    ids.insert(ids.end(), t.begin(), t.end());
  }
  return forward(ids, static_cast<int>(captions.size()))->value;
}

template <typename T>
std::vector<double> TextEncoder<T>::caption_feature(const std::string& caption) const {
  const auto tokens = encode(caption);
  Tensor<T> first({1, config_.text_dim});
  std::copy(tokens.data(), tokens.data() + config_.text_dim, first.data());
  return unit(to_double(projection_(nn::constant(std::move(first)))->value));
}

template Tensor<float> image_to_encoder_input<float>(const Image&, int);
template Tensor<double> image_to_encoder_input<double>(const Image&, int);
template class VisualEncoder<float>;
template class VisualEncoder<double>;
template class TextEncoder<float>;
template class TextEncoder<double>;

}  // namespace objcomp::encoders
