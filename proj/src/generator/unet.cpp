#include "objcomp/generator/unet.hpp"

#include <algorithm>
#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::generator {

using nn::Var;

void UNetConfig::validate() const {
  if (channel_mult.empty()) throw ConfigError("unet channel_mult is empty");
  const int down = 1 << (levels() - 1);
  if (image_size <= 0 || image_size % down != 0) {
    throw ConfigError("unet image_size " + std::to_string(image_size) + " not divisible by " + std::to_string(down));
  }
  for (int m : channel_mult) {
    const int ch = base_channels * m;
    if (m <= 0 || ch % groups != 0) throw ConfigError("unet groups must divide every level's channel count");
    if (ch % heads != 0) throw ConfigError("unet heads must divide every level's channel count");
  }
  if (context_dim <= 0) throw ConfigError("unet context_dim must be positive");
  if (in_channels <= 0 || out_channels <= 0) throw ConfigError("unet channel counts must be positive");
}

nlohmann::json UNetConfig::to_json() const {
  return {{"image_size", image_size},
          {"base_channels", base_channels},
          {"channel_mult", channel_mult},
          {"attention_resolutions", attention_resolutions},
          {"context_dim", context_dim},
          {"heads", heads},
          {"groups", groups},
          {"in_channels", in_channels},
          {"out_channels", out_channels},
          {"seed", seed}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.channel_mult = j.value("channel_mult", c.channel_mult);
  c.attention_resolutions = j.value("attention_resolutions", c.attention_resolutions);
  c.context_dim = j.value("context_dim", c.context_dim);
  c.heads = j.value("heads", c.heads);
  c.groups = j.value("groups", c.groups);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

template <typename T>
nn::Tensor<T> timestep_embedding(const std::vector<int>& t, int dim) {
  const int n = static_cast<int>(t.size());
  const int half = dim / 2;
  nn::Tensor<T> out({n, dim});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      const double arg = t[i] * freq;
      out[static_cast<std::size_t>(i) * dim + k] = static_cast<T>(std::cos(arg));
      out[static_cast<std::size_t>(i) * dim + half + k] = static_cast<T>(std::sin(arg));
    }
  return out;
}

template <typename T>
ResBlock<T>::ResBlock(nn::ParamSet<T>& ps, const std::string& name, int in, int out, int time_dim, int groups,
                      Rng& rng) {
  norm1 = nn::GroupNorm<T>(ps, name + ".norm1", in, std::min(groups, in), rng);
  conv1 = nn::Conv2d<T>(ps, name + ".conv1", in, out, 3, 1, 1, rng);
  time_proj = nn::Linear<T>(ps, name + ".time_proj", time_dim, out, rng);
  norm2 = nn::GroupNorm<T>(ps, name + ".norm2", out, groups, rng);
  conv2 = nn::Conv2d<T>(ps, name + ".conv2", out, out, 3, 1, 1, rng);
  has_skip = in != out;
  if (has_skip) skip = nn::Conv2d<T>(ps, name + ".skip", in, out, 1, 1, 0, rng);
}

template <typename T>
Var<T> ResBlock<T>::operator()(const Var<T>& x, const Var<T>& temb) const {
  auto h = conv1(nn::silu(norm1(x)));
  h = nn::add_channel_vector(h, time_proj(nn::silu(temb)));
  h = conv2(nn::silu(norm2(h)));
  return nn::add(has_skip ? skip(x) : x, h);
}

template <typename T>
SpatialTransformer<T>::SpatialTransformer(nn::ParamSet<T>& ps, const std::string& name, int channels,
                                          int context_dim, int heads, int groups, Rng& rng) {
  norm = nn::GroupNorm<T>(ps, name + ".norm", channels, groups, rng);
  proj_in = nn::Linear<T>(ps, name + ".proj_in", channels, channels, rng);
  ln1 = nn::LayerNorm<T>(ps, name + ".ln1", channels, rng);
  self_attn = nn::MultiHeadAttention<T>(ps, name + ".self_attn", channels, channels, heads, rng);
  ln2 = nn::LayerNorm<T>(ps, name + ".ln2", channels, rng);
  cross = CrossAttentionParams<T>(ps, name + ".cross", channels, context_dim, channels, heads, rng);
  cross_out = nn::Linear<T>(ps, name + ".cross_out", channels, channels, rng);
  ln3 = nn::LayerNorm<T>(ps, name + ".ln3", channels, rng);
  ff = nn::FeedForward<T>(ps, name + ".ff", channels, 4 * channels, rng);
  proj_out = nn::Linear<T>(ps, name + ".proj_out", channels, channels, rng);
}

template <typename T>
Var<T> SpatialTransformer<T>::operator()(const Var<T>& x, const Var<T>& context) const {
  const int h = x->shape()[2], w = x->shape()[3];
  auto tok = proj_in(nn::to_tokens(norm(x)));
  auto a = ln1(tok);
  tok = nn::add(tok, self_attn(a, a));
  tok = nn::add(tok, cross_out(cross_attention(ln2(tok), context, cross)));
  tok = nn::add(tok, ff(ln3(tok)));
  return nn::add(x, nn::from_tokens(proj_out(tok), h, w));
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const int base = config_.base_channels;
  const int td = config_.time_dim();
  const int g = config_.groups;
  time1_ = nn::Linear<T>(params_, "unet.time1", base, td, rng);
  time2_ = nn::Linear<T>(params_, "unet.time2", td, td, rng);
  conv_in_ = nn::Conv2d<T>(params_, "unet.conv_in", config_.in_channels, base, 3, 1, 1, rng);

  const auto has_attn = [&](int res) {
    const auto& ar = config_.attention_resolutions;
    return std::find(ar.begin(), ar.end(), res) != ar.end();
  };
  levels_.resize(config_.levels());
  int prev = base;
  int res = config_.image_size;
  for (int i = 0; i < config_.levels(); ++i) {
    const int ch = base * config_.channel_mult[i];
    const std::string name = "unet.down" + std::to_string(i);
    Level& lv = levels_[i];
    lv.down = ResBlock<T>(params_, name + ".res", prev, ch, td, g, rng);
    lv.attn = has_attn(res);
    if (lv.attn) {
      lv.down_attn = SpatialTransformer<T>(params_, name + ".attn", ch, config_.context_dim, config_.heads, g, rng);
    }
    if (i + 1 < config_.levels()) {
      lv.downsample = nn::Conv2d<T>(params_, name + ".downsample", ch, ch, 3, 2, 1, rng);
      res /= 2;
    }
    prev = ch;
  }
  mid1_ = ResBlock<T>(params_, "unet.mid1", prev, prev, td, g, rng);
  mid_attn_ = SpatialTransformer<T>(params_, "unet.mid_attn", prev, config_.context_dim, config_.heads, g, rng);
  mid2_ = ResBlock<T>(params_, "unet.mid2", prev, prev, td, g, rng);
  for (int i = config_.levels() - 1; i >= 0; --i) {
    const int ch = base * config_.channel_mult[i];
    const std::string name = "unet.up" + std::to_string(i);
    Level& lv = levels_[i];
    lv.up = ResBlock<T>(params_, name + ".res", prev + ch, ch, td, g, rng);
    if (lv.attn) {
      lv.up_attn = SpatialTransformer<T>(params_, name + ".attn", ch, config_.context_dim, config_.heads, g, rng);
    }
    prev = ch;
  }
  norm_out_ = nn::GroupNorm<T>(params_, "unet.norm_out", base, g, rng);
  conv_out_ = nn::Conv2d<T>(params_, "unet.conv_out", base, config_.out_channels, 3, 1, 1, rng);
}

template <typename T>
Var<T> UNet<T>::forward(const Var<T>& x, const std::vector<int>& t, const Var<T>& context) const {
  const auto& s = x->shape();
  const int n = s.empty() ? 0 : s[0];
  if (s.size() != 4 || s[1] != config_.in_channels || s[2] != config_.image_size || s[3] != config_.image_size) {
    throw ShapeError("unet input: expected [N, " + std::to_string(config_.in_channels) + ", " +
                     std::to_string(config_.image_size) + ", " + std::to_string(config_.image_size) + "], got " +
                     nn::shape_string(s));
  }
  if (static_cast<int>(t.size()) != n) throw ShapeError("unet: timestep count does not match batch");
  const auto& cs = context->shape();
  if (cs.size() != 3 || cs[0] != n || cs[2] != config_.context_dim) {
    throw ShapeError("unet conditioning: expected [" + std::to_string(n) + ", L, " +
                     std::to_string(config_.context_dim) + "], got " + nn::shape_string(cs));
  }
  auto temb = nn::constant(timestep_embedding<T>(t, config_.base_channels));
  temb = time2_(nn::silu(time1_(temb)));

  auto h = conv_in_(x);
  std::vector<Var<T>> skips;
  for (int i = 0; i < config_.levels(); ++i) {
    const Level& lv = levels_[i];
    h = lv.down(h, temb);
    if (lv.attn) h = lv.down_attn(h, context);
    skips.push_back(h);
    if (i + 1 < config_.levels()) h = lv.downsample(h);
  }
  h = mid1_(h, temb);
  h = mid_attn_(h, context);
  h = mid2_(h, temb);
  for (int i = config_.levels() - 1; i >= 0; --i) {
    const Level& lv = levels_[i];
    h = lv.up(nn::concat_channels(h, skips[i]), temb);
    if (lv.attn) h = lv.up_attn(h, context);
    if (i > 0) h = nn::upsample_nearest2(h);
  }
  return conv_out_(nn::silu(norm_out_(h)));
}

template nn::Tensor<float> timestep_embedding<float>(const std::vector<int>&, int);
template nn::Tensor<double> timestep_embedding<double>(const std::vector<int>&, int);
template struct ResBlock<float>;
template struct ResBlock<double>;
template struct SpatialTransformer<float>;
template struct SpatialTransformer<double>;
template class UNet<float>;
template class UNet<double>;

}  // namespace objcomp::generator
