#include <gtest/gtest.h>

#include <cmath>

#include "objcomp/nn/ops.hpp"
#include "objcomp/nn/optim.hpp"
#include "support/gradcheck.hpp"

using namespace objcomp;
using namespace objcomp::nn;
using objcomp::testing::check_gradients;
using objcomp::testing::random_tensor;

namespace {

using Params = std::vector<std::pair<std::string, Var<double>>>;

void expect_grads(const std::function<Var<double>()>& f, const Params& params, double tol = 1e-5) {
  const auto r = check_gradients(f, params, 6);
  EXPECT_LT(r.max_rel_error, tol) << "worst " << r.worst;
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  t.at({1, 2, 3}) = 5.0f;
  EXPECT_EQ(t[23], 5.0f);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({6, 4}).shape(), (Shape{6, 4}));
}

TEST(Ops, LossesMatchScalarLoops) {
  Rng rng(1);
  const auto a = random_tensor({3, 5}, rng), b = random_tensor({3, 5}, rng);
  double mse = 0, l1 = 0, ms = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    mse += (a[i] - b[i]) * (a[i] - b[i]);
    l1 += std::abs(a[i] - b[i]);
    ms += a[i] * a[i];
  }
  const double n = static_cast<double>(a.numel());
  EXPECT_NEAR(mse_loss(constant(a), constant(b))->value[0], mse / n, 1e-12);
  EXPECT_NEAR(l1_loss(constant(a), constant(b))->value[0], l1 / n, 1e-12);
  EXPECT_NEAR(mean_square(constant(a))->value[0], ms / n, 1e-12);
}

TEST(Ops, LinearMatchesLoop) {
  Rng rng(2);
  const auto x = random_tensor({2, 3, 4}, rng), w = random_tensor({5, 4}, rng), b = random_tensor({5}, rng);
  const auto y = linear(constant(x), constant(w), constant(b))->value;
  for (int n = 0; n < 6; ++n)
    for (int o = 0; o < 5; ++o) {
      double s = b[o];
      for (int i = 0; i < 4; ++i) s += x[n * 4 + i] * w[o * 4 + i];
      EXPECT_NEAR(y[n * 5 + o], s, 1e-12);
    }
}

TEST(Ops, Conv2dMatchesDirectLoop) {
  Rng rng(3);
  for (int stride : {1, 2}) {
    const int n = 2, ci = 3, co = 4, h = 7, k = 3, pad = 1;
    const auto x = random_tensor({n, ci, h, h}, rng), w = random_tensor({co, ci, k, k}, rng);
    const auto b = random_tensor({co}, rng);
    const auto y = conv2d(constant(x), constant(w), constant(b), stride, pad)->value;
    const int oh = (h + 2 * pad - k) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{n, co, oh, oh}));
    for (int in = 0; in < n; ++in)
      for (int o = 0; o < co; ++o)
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < oh; ++xx) {
            double s = b[o];
            for (int c = 0; c < ci; ++c)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int sy = yy * stride + ky - pad, sx = xx * stride + kx - pad;
                  if (sy < 0 || sy >= h || sx < 0 || sx >= h) continue;
                  s += x.at({in, c, sy, sx}) * w.at({o, c, ky, kx});
                }
            EXPECT_NEAR(y.at({in, o, yy, xx}), s, 1e-10);
          }
  }
}

TEST(Ops, AttentionMatchesBruteForce) {
  Rng rng(4);
  const int n = 2, lq = 3, lk = 5, d = 8, heads = 2, dh = d / heads;
  const auto q = random_tensor({n, lq, d}, rng), k = random_tensor({n, lk, d}, rng), v = random_tensor({n, lk, d}, rng);
  const auto out = multi_head_attention(constant(q), constant(k), constant(v), heads)->value;
  const auto probs = attention_probabilities(q, k, heads);
  for (int b = 0; b < n; ++b)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < lq; ++i) {
        std::vector<double> logits(lk);
        double mx = -1e300;
        for (int j = 0; j < lk; ++j) {
          double s = 0;
          for (int e = 0; e < dh; ++e) s += q.at({b, i, h * dh + e}) * k.at({b, j, h * dh + e});
          logits[j] = s / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, logits[j]);
        }
        double z = 0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (int j = 0; j < lk; ++j) EXPECT_NEAR(probs.at({b, h, i, j}), logits[j] / z, 1e-12);
        for (int e = 0; e < dh; ++e) {
          double s = 0;
          for (int j = 0; j < lk; ++j) s += logits[j] / z * v.at({b, j, h * dh + e});
          EXPECT_NEAR(out.at({b, i, h * dh + e}), s, 1e-12);
        }
      }
}

TEST(Ops, GroupNormNormalisesGroups) {
  Rng rng(5);
  const auto x = random_tensor({2, 4, 3, 3}, rng, 3.0);
  const auto y = group_norm(constant(x), constant(Tensor<double>({4}, 1.0)), constant(Tensor<double>({4}, 0.0)), 2)
                     ->value;
  for (int n = 0; n < 2; ++n)
    for (int g = 0; g < 2; ++g) {
      double s = 0, s2 = 0;
      for (int c = 2 * g; c < 2 * g + 2; ++c)
        for (int i = 0; i < 9; ++i) {
          const double v = y[(n * 4 + c) * 9 + i];
          s += v;
          s2 += v * v;
        }
      EXPECT_NEAR(s / 18, 0.0, 1e-10);
      EXPECT_NEAR(s2 / 18, 1.0, 1e-4);
    }
}

TEST(Ops, TokenMixMatchesLoop) {
  Rng rng(6);
  const auto x = random_tensor({2, 5, 3}, rng), k = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
  const auto y = token_mix(constant(x), constant(k), constant(b))->value;
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 4; ++o)
      for (int d = 0; d < 3; ++d) {
        double s = b[o];
        for (int i = 0; i < 5; ++i) s += k.at({o, i}) * x.at({n, i, d});
        EXPECT_NEAR(y.at({n, o, d}), s, 1e-12);
      }
}

TEST(Ops, PatchifyRasterOrder) {
  Tensor<double> x({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x[i] = i;
  const auto p = patchify(constant(x), 2)->value;
  ASSERT_EQ(p.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(p.at({0, 1, 0}), 2.0);
  EXPECT_EQ(p.at({0, 2, 0}), 8.0);
  EXPECT_EQ(p.at({0, 3, 3}), 15.0);
}

TEST(Gradients, ElementwiseAndNorms) {
  Rng rng(7);
  auto x = variable(random_tensor({2, 4, 3, 3}, rng));
  auto g = variable(random_tensor({4}, rng)), b = variable(random_tensor({4}, rng));
  expect_grads([&] { return mean_square(silu(group_norm(x, g, b, 2))); }, {{"x", x}, {"g", g}, {"b", b}});
  auto s = variable(random_tensor({2, 3, 6}, rng));
  auto lg = variable(random_tensor({6}, rng)), lb = variable(random_tensor({6}, rng));
  expect_grads([&] { return mean_square(gelu(layer_norm(s, lg, lb))); }, {{"s", s}, {"lg", lg}, {"lb", lb}});
}

TEST(Gradients, ConvolutionStrides) {
  Rng rng(8);
  auto x = variable(random_tensor({2, 3, 6, 6}, rng));
  auto w = variable(random_tensor({4, 3, 3, 3}, rng, 0.3));
  auto b = variable(random_tensor({4}, rng));
  for (int stride : {1, 2}) {
    expect_grads([&] { return mean_square(conv2d(x, w, b, stride, 1)); }, {{"x", x}, {"w", w}, {"b", b}});
  }
  expect_grads([&] { return mean_square(upsample_nearest2(conv2d(x, w, b, 1, 0))); }, {{"x", x}, {"w", w}});
}

TEST(Gradients, SequenceOps) {
  Rng rng(9);
  auto x = variable(random_tensor({2, 4, 6}, rng));
  auto tok = variable(random_tensor({6}, rng));
  auto pos = variable(random_tensor({5, 6}, rng));
  auto table = variable(random_tensor({10, 6}, rng));
  auto k = variable(random_tensor({3, 5}, rng)), kb = variable(random_tensor({3}, rng));
  const std::vector<int> ids{1, 3, 3, 9, 0, 2, 7, 7};
  expect_grads(
      [&] {
        auto y = add_positional(prepend_token(add(x, embedding(table, ids, 2, 4)), tok), pos);
        return add(mean_square(token_mix(y, k, kb)), mean_square(select_token(y, 0)));
      },
      {{"x", x}, {"tok", tok}, {"pos", pos}, {"table", table}, {"k", k}, {"kb", kb}});
}

TEST(Gradients, AttentionAndFeatureMaps) {
  Rng rng(10);
  auto q = variable(random_tensor({2, 3, 4}, rng));
  auto k = variable(random_tensor({2, 5, 4}, rng));
  auto v = variable(random_tensor({2, 5, 4}, rng));
  expect_grads([&] { return mean_square(multi_head_attention(q, k, v, 2)); }, {{"q", q}, {"k", k}, {"v", v}});
  auto f = variable(random_tensor({2, 3, 2, 2}, rng));
  auto c = variable(random_tensor({2, 3}, rng));
  expect_grads(
      [&] {
        auto t = to_tokens(add_channel_vector(f, c));
        return mean_square(concat_channels(from_tokens(t, 2, 2), f));
      },
      {{"f", f}, {"c", c}});
}

TEST(Autograd, ConstantsBuildNoGraph) {
  Rng rng(11);
  auto a = constant(random_tensor({3}, rng));
  auto y = mul(a, a);
  EXPECT_FALSE(y->requires_grad);
  EXPECT_TRUE(y->inputs.empty());
}

TEST(Optim, AdamReducesQuadratic) {
  ParamSet<double> ps;
  Rng rng(12);
  auto w = ps.create("w", {4}, Init::Normal, rng, 1.0);
  Adam<double> opt(ps, {.learning_rate = 0.05});
  const double before = mean_square(w)->value[0];
  for (int i = 0; i < 200; ++i) {
    backward(mean_square(w));
    opt.step();
  }
  EXPECT_LT(mean_square(w)->value[0], 1e-3 * before);
}
