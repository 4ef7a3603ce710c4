#include "objcomp/generator/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "objcomp/errors.hpp"
#include "objcomp/nn/optim.hpp"

namespace objcomp::generator {

using nn::Tensor;
using nn::Var;

CompositeRequest request_from_triplet(const datagen::TrainingTriplet& t, int steps, std::uint64_t seed) {
  return {t.background_image, t.mask, t.object_image, steps, seed};
}

template <typename T>
Tensor<T> image_to_model(const Image& img) {
  const int w = img.width, h = img.height, c = img.channels;
  Tensor<T> out({c, h, w});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(static_cast<std::size_t>(k) * h + y) * w + x] = static_cast<T>(2.0f * img.at(x, y, k) - 1.0f);
  return out;
}

Image model_to_image(const Tensor<float>& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Image out(w, h, c);
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out.at(xx, y, k) = 0.5f * (x[(static_cast<std::size_t>(k) * h + y) * w + xx] + 1.0f);
  quantize8(out);
  return out;
}

namespace {

void check_triplet_size(const datagen::TrainingTriplet& t, int size) {
  if (t.background_image.width != size || t.background_image.height != size || t.background_image.channels != 3) {
    throw ShapeError("triplet background must be " + std::to_string(size) + "x" + std::to_string(size) + " RGB");
  }
  if (t.mask.width != size || t.mask.height != size || t.mask.channels != 1) {
    throw ShapeError("triplet mask must be " + std::to_string(size) + "x" + std::to_string(size) + " single-channel");
  }
}

// Writes [x_t, bg * M, M] for sample i of a [N, 7, S, S] input.
template <typename T>
void fill_input(Tensor<T>& input, int i, const Tensor<T>& xt, const Image& background, const Image& mask) {
  const int s = input.dim(2);
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  T* dst = input.data() + static_cast<std::size_t>(i) * 7 * plane;
  std::copy(xt.data(), xt.data() + 3 * plane, dst);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * s + x;
      const T m = mask.at(x, y, 0) >= 0.5f ? T(1) : T(0);
      for (int c = 0; c < 3; ++c) dst[(3 + c) * plane + p] = m * static_cast<T>(2.0f * background.at(x, y, c) - 1.0f);
      dst[6 * plane + p] = m;
    }
}

}  // namespace

template <typename T>
DenoisingBatch<T> make_denoising_batch(const std::vector<const datagen::TrainingTriplet*>& batch,
                                       const std::vector<int>& t, const Tensor<T>& noise,
                                       const DiffusionSchedule& schedule) {
  if (batch.empty()) throw ConfigError("denoising batch is empty");
  const int n = static_cast<int>(batch.size());
  const int s = batch[0]->background_image.width;
  if (static_cast<int>(t.size()) != n) throw ShapeError("denoising batch: timestep count mismatch");
  nn::check_shape(noise.shape(), {n, 3, s, s}, "denoising batch noise");
  DenoisingBatch<T> out{Tensor<T>({n, 7, s, s}), noise, t};
  const std::size_t per = static_cast<std::size_t>(3) * s * s;
  for (int i = 0; i < n; ++i) {
    check_triplet_size(*batch[i], s);
    const Tensor<T> gt = image_to_model<T>(batch[i]->background_image);
    Tensor<T> eps({3, s, s});
    std::copy(noise.data() + i * per, noise.data() + (i + 1) * per, eps.data());
    fill_input(out.input, i, q_sample(gt, eps, t[i], schedule), batch[i]->background_image, batch[i]->mask);
  }
  return out;
}

template <typename T>
DenoisingBatch<T> make_denoising_batch(const std::vector<const datagen::TrainingTriplet*>& batch,
                                       const DiffusionSchedule& schedule, Rng& rng) {
  if (batch.empty()) throw ConfigError("denoising batch is empty");
  const int n = static_cast<int>(batch.size());
  const int s = batch[0]->background_image.width;
  std::vector<int> t(n);
  for (auto& v : t) v = rng.uniform_int(1, schedule.steps());
  Tensor<T> noise({n, 3, s, s});
  for (auto& v : noise.storage()) v = static_cast<T>(rng.normal());
  return make_denoising_batch(batch, t, noise, schedule);
}

template <typename T>
Var<T> loss_gen(const UNet<T>& unet, const DenoisingBatch<T>& batch, const Var<T>& context) {
  auto pred = unet.forward(nn::constant(batch.input), batch.t, context);
  return nn::mse_loss(pred, nn::constant(batch.noise));
}

template <typename T>
Var<T> loss_adapt(const UNet<T>& unet, const adaptor::Adaptor<T>& adaptor, const DenoisingBatch<T>& batch,
                  const Tensor<T>& visual_tokens) {
  return loss_gen(unet, batch, adaptor.forward(nn::constant(visual_tokens)));
}

namespace {

Tensor<float> stack(const std::vector<Tensor<float>>& items, const std::vector<int>& idx) {
  nn::Shape shape = items.at(0).shape();
  shape.insert(shape.begin(), static_cast<int>(idx.size()));
  Tensor<float> out(shape);
  const std::size_t per = items[0].numel();
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(items[idx[i]].data(), items[idx[i]].data() + per,
                                                         out.data() + i * per);
  return out;
}

// Shared loop of the three diffusion-supervised stages: draws a batch,
// optionally augments it, and hands it to `step_fn` which returns the loss.
template <typename StepFn>
StageResult run_denoising_loop(const std::vector<datagen::TrainingTriplet>& data, const DiffusionSchedule& schedule,
                               const TrainSchedule& train, const std::optional<datagen::AugmentationSpec>& augmentation,
                               nn::Adam<float>& opt, const char* stage, const ProgressFn& progress, StepFn step_fn) {
  if (data.empty()) throw ConfigError(std::string(stage) + ": no training triplets");
  if (train.batch_size <= 0) throw ConfigError(std::string(stage) + ": batch_size must be positive");
  EpochSampler sampler(static_cast<int>(data.size()), Rng::derive(train.seed, 21));
  Rng rng(Rng::derive(train.seed, 22));
  Rng aug_rng(Rng::derive(train.seed, 23));
  StageResult result;
  std::vector<datagen::TrainingTriplet> augmented(train.batch_size);
  for (long step = 1; step <= train.steps; ++step) {
    const auto idx = sampler.next(train.batch_size);
    std::vector<const datagen::TrainingTriplet*> batch;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& t = data[idx[i]];
      if (augmentation && aug_rng.uniform() < 0.5) {
        augmented[i] = datagen::crop_shift_augment(t, *augmentation, aug_rng).triplet;
        batch.push_back(&augmented[i]);
      } else {
        batch.push_back(&t);
      }
    }
    const auto db = make_denoising_batch<float>(batch, schedule, rng);
    auto loss = step_fn(db, idx);
    const double value = loss->value[0];
    if (!std::isfinite(value)) {
      throw TrainingError(std::string(stage) + ": non-finite loss at step " + std::to_string(step) +
                          " (learning rate " + std::to_string(train.rate_at(step - 1)) + ")");
    }
    nn::backward(loss);
    opt.set_learning_rate(train.rate_at(step - 1));
    opt.step();
    result.curve.emplace_back(step, value);
    if (progress) progress(step, value);
  }
  result.steps = train.steps;
  return result;
}

std::vector<Tensor<float>> adapted_contexts(const adaptor::Adaptor<float>& adaptor,
                                            const encoders::VisualEncoder<float>& visual,
                                            const std::vector<datagen::TrainingTriplet>& data) {
  std::vector<Tensor<float>> out;
  out.reserve(data.size());
  for (const auto& t : data) out.push_back(adaptor.apply(visual.encode(t.object_image)));
  return out;
}

}  // namespace

StageResult train_stage0(UNet<float>& unet, const encoders::TextEncoder<float>& text,
                         const std::vector<datagen::TrainingTriplet>& data, const DiffusionSchedule& schedule,
                         const TrainSchedule& train, const std::optional<datagen::AugmentationSpec>& augmentation,
                         const ProgressFn& progress) {
  std::vector<Tensor<float>> contexts;
  for (const auto& t : data) contexts.push_back(text.encode(t.caption));
  unet.params().set_trainable(true);
  nn::Adam<float> opt(unet.params(), {.learning_rate = train.learning_rate});
  return run_denoising_loop(data, schedule, train, augmentation, opt, "stage 0", progress,
                            [&](const DenoisingBatch<float>& db, const std::vector<int>& idx) {
                              return loss_gen(unet, db, nn::constant(stack(contexts, idx)));
                            });
}

StageResult train_stage2(adaptor::Adaptor<float>& adaptor, const UNet<float>& unet,
                         const encoders::VisualEncoder<float>& visual, const std::vector<datagen::TrainingTriplet>& data,
                         const DiffusionSchedule& schedule, const TrainSchedule& train,
                         const std::optional<datagen::AugmentationSpec>& augmentation,
                         const ProgressFn& progress) {
  for (const auto& [name, p] : unet.params().entries()) {
    if (p->requires_grad) throw ConfigError("stage 2: generator parameter " + name + " is not frozen");
  }
  std::vector<Tensor<float>> tokens;
  for (const auto& t : data) tokens.push_back(visual.encode(t.object_image));
  adaptor.params().set_trainable(true);
  nn::Adam<float> opt(adaptor.params(), {.learning_rate = train.learning_rate});
  return run_denoising_loop(data, schedule, train, augmentation, opt, "stage 2", progress,
                            [&](const DenoisingBatch<float>& db, const std::vector<int>& idx) {
                              return loss_adapt(unet, adaptor, db, stack(tokens, idx));
                            });
}

StageResult train_stage3(UNet<float>& unet, const adaptor::Adaptor<float>& adaptor,
                         const encoders::VisualEncoder<float>& visual, const std::vector<datagen::TrainingTriplet>& data,
                         const DiffusionSchedule& schedule, const TrainSchedule& train,
                         const std::optional<datagen::AugmentationSpec>& augmentation,
                         const ProgressFn& progress) {
  for (const auto& [name, p] : adaptor.params().entries()) {
    if (p->requires_grad) throw ConfigError("stage 3: adaptor parameter " + name + " is not frozen");
  }
  const auto contexts = adapted_contexts(adaptor, visual, data);
  unet.params().set_trainable(true);
  nn::Adam<float> opt(unet.params(), {.learning_rate = train.learning_rate});
  return run_denoising_loop(data, schedule, train, augmentation, opt, "stage 3", progress,
                            [&](const DenoisingBatch<float>& db, const std::vector<int>& idx) {
                              return loss_gen(unet, db, nn::constant(stack(contexts, idx)));
                            });
}

std::vector<Image> sample_with_context(const std::vector<CompositeRequest>& requests, const Tensor<float>& contexts,
                                       const UNet<float>& unet, const DiffusionSchedule& schedule) {
  if (requests.empty()) return {};
  const int n = static_cast<int>(requests.size());
  const int s = unet.config().image_size;
  const int steps = requests[0].steps;
  for (const auto& r : requests) {
    if (r.steps != steps) throw ConfigError("batched sampling requires equal step counts");
    if (r.background.width != s || r.background.height != s || r.background.channels != 3) {
      throw ShapeError("composite background must be " + std::to_string(s) + "x" + std::to_string(s) + " RGB");
    }
    if (r.mask.width != s || r.mask.height != s || r.mask.channels != 1) {
      throw ShapeError("composite mask must be " + std::to_string(s) + "x" + std::to_string(s) + " single-channel");
    }
    for (float m : r.mask.data)
      if (m != 0.0f && m != 1.0f) throw ShapeError("composite mask must be binary");
  }
  if (contexts.rank() != 3 || contexts.dim(0) != n) throw ShapeError("sampling contexts must be [N, L, D]");
  const auto timesteps = schedule.respaced(steps);
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  const std::size_t per = 3 * plane;

  std::vector<Rng> rngs;
  std::vector<Tensor<float>> bg;
  for (const auto& r : requests) {
    rngs.emplace_back(r.seed);
    bg.push_back(image_to_model<float>(r.background));
  }
  auto normal = [&](int i) {
    Tensor<float> z({3, s, s});
    for (auto& v : z.storage()) v = static_cast<float>(rngs[i].normal());
    return z;
  };
  // x holds the current state of every sample, [N, 3, S, S].
  Tensor<float> x({n, 3, s, s});
  const auto replace_known = [&](int i, const Tensor<float>& known) {
    for (int y = 0; y < s; ++y)
      for (int xx = 0; xx < s; ++xx) {
        if (requests[i].mask.at(xx, y, 0) < 0.5f) continue;
        const std::size_t p = static_cast<std::size_t>(y) * s + xx;
        for (int c = 0; c < 3; ++c) x[i * per + c * plane + p] = known[c * plane + p];
      }
  };
  for (int i = 0; i < n; ++i) {
    const auto z = normal(i);
    std::copy(z.data(), z.data() + per, x.data() + i * per);
    replace_known(i, q_sample(bg[i], normal(i), timesteps[0], schedule));
  }

  const auto ctx = nn::constant(contexts);
  Tensor<float> input({n, 7, s, s});
  for (std::size_t k = 0; k < timesteps.size(); ++k) {
    const int t = timesteps[k];
    const int t_prev = k + 1 < timesteps.size() ? timesteps[k + 1] : 0;
    const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t_prev);
    const double beta = 1.0 - ab / ab_prev;
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));

    for (int i = 0; i < n; ++i) {
      Tensor<float> xi({3, s, s});
      std::copy(x.data() + i * per, x.data() + (i + 1) * per, xi.data());
      fill_input(input, i, xi, requests[i].background, requests[i].mask);
    }
    const auto eps = unet.forward(nn::constant(input), std::vector<int>(n, t), ctx)->value;
    for (int i = 0; i < n; ++i) {
      const Tensor<float> z = t_prev > 0 ? normal(i) : Tensor<float>();
      for (std::size_t j = 0; j < per; ++j) {
        const double xt = x[i * per + j];
        double x0 = (xt - std::sqrt(1.0 - ab) * eps[i * per + j]) / std::sqrt(ab);
        x0 = std::clamp(x0, -1.0, 1.0);
        double next = c0 * x0 + ct * xt;
        if (t_prev > 0) next += sigma * z[j];
        x[i * per + j] = static_cast<float>(next);
      }
      if (t_prev > 0) replace_known(i, q_sample(bg[i], normal(i), t_prev, schedule));
    }
  }

  std::vector<Image> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Tensor<float> xi({3, s, s});
    std::copy(x.data() + i * per, x.data() + (i + 1) * per, xi.data());
    // Final replacement happens in image space so kept pixels are bit-exact.
    out.push_back(blend(model_to_image(xi), requests[i].background, requests[i].mask));
  }
  return out;
}

std::vector<Image> sample_composites(const std::vector<CompositeRequest>& requests,
                                     const adaptor::Adaptor<float>& adaptor,
                                     const encoders::VisualEncoder<float>& visual, const UNet<float>& unet,
                                     const DiffusionSchedule& schedule) {
  if (requests.empty()) return {};
  std::vector<Image> objects;
  for (const auto& r : requests) objects.push_back(r.object);
  const auto contexts = adaptor.apply(visual.encode_batch(objects));
  return sample_with_context(requests, contexts, unet, schedule);
}

Image sample_composite(const CompositeRequest& request, const adaptor::Adaptor<float>& adaptor,
                       const encoders::VisualEncoder<float>& visual, const UNet<float>& unet,
                       const DiffusionSchedule& schedule) {
  return sample_composites({request}, adaptor, visual, unet, schedule).at(0);
}

template Tensor<float> image_to_model<float>(const Image&);
template Tensor<double> image_to_model<double>(const Image&);
template DenoisingBatch<float> make_denoising_batch<float>(const std::vector<const datagen::TrainingTriplet*>&,
                                                           const DiffusionSchedule&, Rng&);
template DenoisingBatch<double> make_denoising_batch<double>(const std::vector<const datagen::TrainingTriplet*>&,
                                                             const DiffusionSchedule&, Rng&);
template DenoisingBatch<float> make_denoising_batch<float>(const std::vector<const datagen::TrainingTriplet*>&,
                                                           const std::vector<int>&, const Tensor<float>&,
                                                           const DiffusionSchedule&);
template DenoisingBatch<double> make_denoising_batch<double>(const std::vector<const datagen::TrainingTriplet*>&,
                                                             const std::vector<int>&, const Tensor<double>&,
                                                             const DiffusionSchedule&);
template Var<float> loss_gen<float>(const UNet<float>&, const DenoisingBatch<float>&, const Var<float>&);
template Var<double> loss_gen<double>(const UNet<double>&, const DenoisingBatch<double>&, const Var<double>&);
template Var<float> loss_adapt<float>(const UNet<float>&, const adaptor::Adaptor<float>&,
                                      const DenoisingBatch<float>&, const Tensor<float>&);
template Var<double> loss_adapt<double>(const UNet<double>&, const adaptor::Adaptor<double>&,
                                        const DenoisingBatch<double>&, const Tensor<double>&);

}  // namespace objcomp::generator
