#pragma once

#include <map>
#include <string>

#include "gradcheck.hpp"
#include "objcomp/adaptor.hpp"
#include "objcomp/generator/cross_attention.hpp"
#include "objcomp/generator/diffusion.hpp"

namespace objcomp::testing {

inline adaptor::AdaptorConfig micro_adaptor_config() {
  adaptor::AdaptorConfig c;
  c.in_len = 5;
  c.out_len = 3;
  c.in_dim = 8;
  c.out_dim = 6;
  c.attn_layers = 1;
  c.attn_heads = 2;
  c.seed = 5;
  return c;
}

inline generator::UNetConfig micro_unet_config() {
  generator::UNetConfig c;
  c.image_size = 8;
  c.base_channels = 4;
  c.channel_mult = {1, 2};
  c.attention_resolutions = {4};
  c.context_dim = 6;
  c.heads = 2;
  c.groups = 2;
  c.seed = 11;
  return c;
}

inline generator::DenoisingBatch<double> micro_batch(int n, int size, Rng& rng) {
  generator::DenoisingBatch<double> b;
  b.input = random_tensor({n, 7, size, size}, rng, 0.5);
  b.noise = random_tensor({n, 3, size, size}, rng);
  for (int i = 0; i < n; ++i) b.t.push_back(1 + rng.uniform_int(0, 999));
  return b;
}

/// L_dist on the adaptor.
inline GradReport grad_loss_dist(int per_tensor = 3) {
  adaptor::Adaptor<double> a(micro_adaptor_config());
  Rng rng(101);
  const auto c = a.config();
  const auto x = nn::constant(random_tensor({2, c.in_len, c.in_dim}, rng));
  const auto target = nn::constant(random_tensor({2, c.out_len, c.out_dim}, rng));
  return check_gradients([&] { return adaptor::loss_dist(a.forward(x), target); }, trainable(a.params()),
                         per_tensor);
}

/// L_gen on every U-Net parameter (conditioning held fixed).
inline GradReport grad_loss_gen(int per_tensor = 2) {
  const auto uc = micro_unet_config();
  generator::UNet<double> unet(uc);
  Rng rng(202);
  const auto batch = micro_batch(2, uc.image_size, rng);
  const auto ctx = nn::constant(random_tensor({2, 3, uc.context_dim}, rng));
  return check_gradients([&] { return generator::loss_gen(unet, batch, ctx); }, trainable(unet.params()),
                         per_tensor);
}

/// L_adapt on the adaptor through a frozen U-Net.
inline GradReport grad_loss_adapt(int per_tensor = 3) {
  const auto uc = micro_unet_config();
  generator::UNet<double> unet(uc);
  unet.params().set_trainable(false);
  adaptor::Adaptor<double> a(micro_adaptor_config());
  Rng rng(303);
  const auto batch = micro_batch(2, uc.image_size, rng);
  const auto tokens = random_tensor({2, a.config().in_len, a.config().in_dim}, rng);
  return check_gradients([&] { return generator::loss_adapt(unet, a, batch, tokens); }, trainable(a.params()),
                         per_tensor);
}

/// Cross-attention projections plus both inputs, through a squared-mean head.
inline GradReport grad_cross_attention(int per_tensor = 4) {
  nn::ParamSet<double> ps;
  Rng rng(404);
  generator::CrossAttentionParams<double> p(ps, "xattn", 6, 5, 8, 2, rng);
  auto ex = nn::variable(random_tensor({2, 4, 6}, rng));
  auto e = nn::variable(random_tensor({2, 3, 5}, rng));
  auto params = trainable(ps);
  params.emplace_back("ex", ex);
  params.emplace_back("e", e);
  return check_gradients([&] { return nn::mean_square(generator::cross_attention(ex, e, p)); }, params, per_tensor);
}

}  // namespace objcomp::testing
