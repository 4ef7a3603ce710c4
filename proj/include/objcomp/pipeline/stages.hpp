#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "objcomp/adaptor.hpp"
#include "objcomp/checkpoint.hpp"
#include "objcomp/datagen/dataset_io.hpp"
#include "objcomp/encoders.hpp"
#include "objcomp/generator/diffusion.hpp"
#include "objcomp/pipeline/config.hpp"

namespace objcomp::pipeline {

/// Stage 0 trains the caption-conditioned base generator; 1 and 2 train the
/// adaptor; 3 fine-tunes the generator on adaptor embeddings.
const char* stage_tag_for(int stage);

std::filesystem::path checkpoint_path(const RunConfig& config, const std::string& tag);
std::filesystem::path curve_path(const RunConfig& config, const std::string& tag);

/// Triplets from `dataset_dir` when set, generated from `dataset` otherwise.
std::vector<datagen::TrainingTriplet> training_triplets(const RunConfig& config);

/// Single-object scenes with their class label as caption.
std::vector<adaptor::ImageCaptionPair> stage1_pairs(int count, int canvas_size, std::uint64_t seed);

generator::DiffusionSchedule make_schedule(const RunConfig& config);

struct StageOutput {
  std::string tag;
  std::string checkpoint_id;
  std::filesystem::path checkpoint;
  LossCurve curve;
};

/// Trains one stage and writes its checkpoint and (step, loss) CSV. Throws
/// OrderingError naming the missing upstream stage.
StageOutput run_stage(int stage, const RunConfig& config, const adaptor::ProgressFn& progress = {});

/// Same, with caller-supplied triplets (stages 0, 2, 3) or pairs (stage 1).
StageOutput run_stage(int stage, const RunConfig& config, const std::vector<datagen::TrainingTriplet>& triplets,
                      const std::vector<adaptor::ImageCaptionPair>& pairs, const adaptor::ProgressFn& progress = {});

void write_curve_csv(const std::filesystem::path& path, const LossCurve& curve);
LossCurve read_curve_csv(const std::filesystem::path& path);

/// Encoders plus the inference-time adaptor and generator.
struct Models {
  encoders::VisualEncoder<float> visual;
  encoders::TextEncoder<float> text;
  adaptor::Adaptor<float> adaptor;
  generator::UNet<float> unet;
  std::vector<std::string> checkpoint_ids;

  explicit Models(const RunConfig& config);
};

/// Adaptor from stage 2 and generator from stage 3.
Models load_trained_models(const RunConfig& config);
/// Freshly initialised weights, no checkpoints.
Models untrained_models(const RunConfig& config);

}  // namespace objcomp::pipeline
