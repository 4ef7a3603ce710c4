#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "objcomp/adaptor.hpp"
#include "objcomp/datagen/triplet.hpp"
#include "objcomp/encoders.hpp"
#include "objcomp/generator/schedule.hpp"
#include "objcomp/generator/unet.hpp"
#include "objcomp/train_schedule.hpp"

namespace objcomp::generator {

/// One compositing job. Mask is 0 in the hole, 1 where the background is kept.
struct CompositeRequest {
  Image background;  // RGB
  Image mask;        // single channel {0, 1}
  Image object;      // RGB or RGBA
  int steps = 100;
  std::uint64_t seed = 0;
};

CompositeRequest request_from_triplet(const datagen::TrainingTriplet& t, int steps, std::uint64_t seed);

/// Image [H, W, C] in [0, 1] -> [C, H, W] in [-1, 1].
template <typename T>
nn::Tensor<T> image_to_model(const Image& img);
/// [C, H, W] in [-1, 1] -> image in [0, 1], clamped and snapped to 8 bits.
Image model_to_image(const nn::Tensor<float>& x);

/// Network input and regression target for a batch of triplets.
template <typename T>
struct DenoisingBatch {
  nn::Tensor<T> input;  // [N, 7, S, S]: noisy image, masked background, mask
  nn::Tensor<T> noise;  // [N, 3, S, S]
  std::vector<int> t;
};

/// The noisy image is q_sample of the ground truth everywhere (the
/// background is the ground truth outside the hole, so the mask-blended
/// noisy input coincides with it).
template <typename T>
DenoisingBatch<T> make_denoising_batch(const std::vector<const datagen::TrainingTriplet*>& batch,
                                       const DiffusionSchedule& schedule, Rng& rng);
/// Same with caller-supplied timesteps and noise.
template <typename T>
DenoisingBatch<T> make_denoising_batch(const std::vector<const datagen::TrainingTriplet*>& batch,
                                       const std::vector<int>& t, const nn::Tensor<T>& noise,
                                       const DiffusionSchedule& schedule);

/// Mean squared noise-prediction error over batch and pixels.
template <typename T>
nn::Var<T> loss_gen(const UNet<T>& unet, const DenoisingBatch<T>& batch, const nn::Var<T>& context);

/// loss_gen with the conditioning produced by the adaptor from visual tokens.
template <typename T>
nn::Var<T> loss_adapt(const UNet<T>& unet, const adaptor::Adaptor<T>& adaptor, const DenoisingBatch<T>& batch,
                      const nn::Tensor<T>& visual_tokens);

using adaptor::ProgressFn;
using adaptor::StageResult;

/// Base generator conditioned on caption embeddings.
StageResult train_stage0(UNet<float>& unet, const encoders::TextEncoder<float>& text,
                         const std::vector<datagen::TrainingTriplet>& data, const DiffusionSchedule& schedule,
                         const TrainSchedule& train, const std::optional<datagen::AugmentationSpec>& augmentation,
                         const ProgressFn& progress = {});

/// Adaptor fine-tuning through the frozen generator.
StageResult train_stage2(adaptor::Adaptor<float>& adaptor, const UNet<float>& unet,
                         const encoders::VisualEncoder<float>& visual, const std::vector<datagen::TrainingTriplet>& data,
                         const DiffusionSchedule& schedule, const TrainSchedule& train,
                         const std::optional<datagen::AugmentationSpec>& augmentation,
                         const ProgressFn& progress = {});

/// Generator fine-tuning with the adaptor frozen.
StageResult train_stage3(UNet<float>& unet, const adaptor::Adaptor<float>& adaptor,
                         const encoders::VisualEncoder<float>& visual, const std::vector<datagen::TrainingTriplet>& data,
                         const DiffusionSchedule& schedule, const TrainSchedule& train,
                         const std::optional<datagen::AugmentationSpec>& augmentation,
                         const ProgressFn& progress = {});

/// Ancestral sampling over respaced timesteps. After every step the kept
/// region (mask 1) is replaced by the background noised to the next
/// timestep; the returned images equal the background exactly there.
/// `contexts` is [N, L, context_dim]; all requests must share `steps`.
std::vector<Image> sample_with_context(const std::vector<CompositeRequest>& requests,
                                       const nn::Tensor<float>& contexts, const UNet<float>& unet,
                                       const DiffusionSchedule& schedule);

std::vector<Image> sample_composites(const std::vector<CompositeRequest>& requests,
                                     const adaptor::Adaptor<float>& adaptor,
                                     const encoders::VisualEncoder<float>& visual, const UNet<float>& unet,
                                     const DiffusionSchedule& schedule);

Image sample_composite(const CompositeRequest& request, const adaptor::Adaptor<float>& adaptor,
                       const encoders::VisualEncoder<float>& visual, const UNet<float>& unet,
                       const DiffusionSchedule& schedule);

}  // namespace objcomp::generator
