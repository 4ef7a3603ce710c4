#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "objcomp/adaptor.hpp"
#include "objcomp/datagen/dataset_io.hpp"
#include "objcomp/encoders.hpp"
#include "objcomp/generator/unet.hpp"
#include "objcomp/train_schedule.hpp"

namespace objcomp::pipeline {

struct DiffusionConfig {
  int train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  /// Sampling steps for single composites and for batch evaluation.
  int sample_steps = 100;
  int eval_sample_steps = 50;
};

struct AugmentationConfig {
  datagen::AugmentationSpec spec;
  bool stage2 = false;
  bool stage3 = true;
};

struct EvalConfig {
  int count = 64;
  double rotation_max_deg = 20.0;
  int stress_count = 150;
  double stress_rotation_max_deg = datagen::PerturbationSpec::kStressRotationDeg;
  std::uint64_t seed = 9001;
  double logit_scale = 100.0;
  /// Composites sampled per network call.
  int batch = 16;
};

/// Everything a run needs. Serialised as one JSON document; every key can be
/// overridden from the command line with dotted paths ("stages.stage3.steps=10").
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";
  /// Training triplets; generated from `dataset` when the directory is empty
  /// or unset.
  std::filesystem::path dataset_dir;
  datagen::DatasetSpec dataset;
  /// Rendered single-object scenes used for distance pretraining.
  int stage1_pairs = 256;
  encoders::EncoderConfig encoders;
  adaptor::AdaptorConfig adaptor;
  generator::UNetConfig unet;
  DiffusionConfig diffusion;
  AugmentationConfig augmentation;
  /// Keys "stage0" .. "stage3".
  std::map<std::string, TrainSchedule> stages;
  EvalConfig eval;

  /// Single-core desk preset.
  static RunConfig desk();
  /// Schedules at the published scale (learning rate, batch size); step
  /// counts are derived from the epoch counts for a `dataset_size` corpus.
  static std::map<std::string, TrainSchedule> full_scale_schedules(long dataset_size);

  const TrainSchedule& stage(int id) const;
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides; the value is parsed as JSON when possible
/// and taken as a string otherwise. Unknown keys are a ConfigError.
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides);

}  // namespace objcomp::pipeline
