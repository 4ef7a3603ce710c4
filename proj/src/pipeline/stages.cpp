#include "objcomp/pipeline/stages.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "objcomp/errors.hpp"

namespace objcomp::pipeline {

namespace fs = std::filesystem;

const char* stage_tag_for(int stage) {
  switch (stage) {
    case 0: return stage_tag::kGeneratorBase;
    case 1: return stage_tag::kAdaptorStage1;
    case 2: return stage_tag::kAdaptorStage2;
    case 3: return stage_tag::kGeneratorStage3;
  }
  throw ConfigError("stage must be 0, 1, 2 or 3 (got " + std::to_string(stage) + ")");
}

fs::path checkpoint_path(const RunConfig& config, const std::string& tag) {
  return config.output_dir / "checkpoints" / (tag + ".ckpt");
}

fs::path curve_path(const RunConfig& config, const std::string& tag) {
  return config.output_dir / "curves" / (tag + ".csv");
}

std::vector<datagen::TrainingTriplet> training_triplets(const RunConfig& config) {
  if (!config.dataset_dir.empty()) return datagen::read_dataset(config.dataset_dir);
  return datagen::generate_triplets(config.dataset);
}

std::vector<adaptor::ImageCaptionPair> stage1_pairs(int count, int canvas_size, std::uint64_t seed) {
  static constexpr datagen::BackgroundTexture textures[] = {
      datagen::BackgroundTexture::Flat, datagen::BackgroundTexture::Gradient, datagen::BackgroundTexture::Noise};
  std::vector<adaptor::ImageCaptionPair> out;
  std::uint64_t draw = 0;
  while (static_cast<int>(out.size()) < count) {
    datagen::SceneSpec spec;
    spec.canvas_size = canvas_size;
    spec.num_objects = 1;
    spec.background_texture = textures[out.size() % 3];
    spec.rng_seed = Rng::derive(seed, draw++);
    try {
      auto scene = datagen::generate_scene(spec);
      out.push_back({std::move(scene.image), scene.labels.at(0)});
    } catch (const datagen::UnsatisfiableSceneError&) {
    }
  }
  return out;
}

generator::DiffusionSchedule make_schedule(const RunConfig& config) {
  return generator::DiffusionSchedule(config.diffusion.train_steps, config.diffusion.beta_start,
                                      config.diffusion.beta_end);
}

void write_curve_csv(const fs::path& path, const LossCurve& curve) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (const auto& [step, loss] : curve) {
    std::snprintf(buf, sizeof(buf), "%ld,%.9g\n", step, loss);
    out << buf;
  }
}

LossCurve read_curve_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  LossCurve curve;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    long step = 0;
    double loss = 0;
    if (std::sscanf(line.c_str(), "%ld,%lf", &step, &loss) != 2) {
      throw ParseError(path.filename().string() + ":" + std::to_string(line_no) + ": expected step,loss", line_no);
    }
    curve.emplace_back(step, loss);
  }
  return curve;
}

Models::Models(const RunConfig& config)
    : visual(config.encoders), text(config.encoders), adaptor(config.adaptor), unet(config.unet) {}

namespace {

Checkpoint require(const RunConfig& config, int stage, int requested_by) {
  const std::string tag = stage_tag_for(stage);
  const auto path = checkpoint_path(config, tag);
  if (!fs::exists(path)) {
    throw OrderingError("stage " + std::to_string(requested_by) + " requires stage " + std::to_string(stage) +
                        " (missing checkpoint " + path.string() + ")");
  }
  auto ckpt = load_checkpoint(path);
  if (ckpt.meta.stage != tag) {
    throw OrderingError("checkpoint " + path.string() + " is tagged '" + ckpt.meta.stage + "', expected '" + tag +
                        "'");
  }
  return ckpt;
}

template <typename T>
StageOutput finish(const RunConfig& config, const std::string& tag, const TrainSchedule& train,
                   const nn::ParamSet<T>& params, LossCurve curve) {
  const auto path = checkpoint_path(config, tag);
  fs::create_directories(path.parent_path());
  CheckpointMeta meta{.stage = tag, .step = train.steps, .seed = train.seed, .config = config.to_json()};
  save_checkpoint(path, meta, params);
  write_curve_csv(curve_path(config, tag), curve);
  return {tag, load_checkpoint(path).id, path, std::move(curve)};
}

std::optional<datagen::AugmentationSpec> augmentation_for(const RunConfig& config, bool enabled,
                                                          std::uint64_t seed) {
  if (!enabled) return std::nullopt;
  auto spec = config.augmentation.spec;
  spec.rng_seed = seed;
  return spec;
}

}  // namespace

StageOutput run_stage(int stage, const RunConfig& config, const adaptor::ProgressFn& progress) {
  stage_tag_for(stage);
  if (stage == 2) {
    require(config, 1, 2);
    require(config, 0, 2);
  } else if (stage == 3) {
    require(config, 2, 3);
    require(config, 0, 3);
  }
  if (stage == 1) {
    const auto pairs = stage1_pairs(config.stage1_pairs, config.dataset.canvas_size,
                                    Rng::derive(config.seed, 0x5131));
    return run_stage(stage, config, {}, pairs, progress);
  }
  return run_stage(stage, config, training_triplets(config), {}, progress);
}

StageOutput run_stage(int stage, const RunConfig& config, const std::vector<datagen::TrainingTriplet>& triplets,
                      const std::vector<adaptor::ImageCaptionPair>& pairs, const adaptor::ProgressFn& progress) {
  config.validate();
  const std::string tag = stage_tag_for(stage);
  TrainSchedule train = config.stage(stage);
  train.seed = Rng::derive(config.seed, train.seed);
  const auto schedule = make_schedule(config);
  Models m(config);

  switch (stage) {
    case 0: {
      auto r = generator::train_stage0(m.unet, m.text, triplets, schedule, train,
                                       augmentation_for(config, config.augmentation.stage3, train.seed), progress);
      return finish(config, tag, train, m.unet.params(), std::move(r.curve));
    }
    case 1: {
      auto r = adaptor::train_stage1(m.adaptor, m.visual, m.text, pairs, train, progress);
      return finish(config, tag, train, m.adaptor.params(), std::move(r.curve));
    }
    case 2: {
      apply_checkpoint(require(config, 1, 2), m.adaptor.params());
      apply_checkpoint(require(config, 0, 2), m.unet.params());
      m.unet.params().set_trainable(false);
      auto r = generator::train_stage2(m.adaptor, m.unet, m.visual, triplets, schedule, train,
                                       augmentation_for(config, config.augmentation.stage2, train.seed), progress);
      return finish(config, tag, train, m.adaptor.params(), std::move(r.curve));
    }
    default: {
      apply_checkpoint(require(config, 2, 3), m.adaptor.params());
      apply_checkpoint(require(config, 0, 3), m.unet.params());
      m.adaptor.params().set_trainable(false);
      auto r = generator::train_stage3(m.unet, m.adaptor, m.visual, triplets, schedule, train,
                                       augmentation_for(config, config.augmentation.stage3, train.seed), progress);
      return finish(config, tag, train, m.unet.params(), std::move(r.curve));
    }
  }
}

Models load_trained_models(const RunConfig& config) {
  Models m(config);
  const auto a = require(config, 2, 3);
  const auto path = checkpoint_path(config, stage_tag::kGeneratorStage3);
  if (!fs::exists(path)) {
    throw OrderingError("compositing requires stage 3 (missing checkpoint " + path.string() + ")");
  }
  const auto g = load_checkpoint(path);
  if (g.meta.stage != stage_tag::kGeneratorStage3) {
    throw OrderingError("checkpoint " + path.string() + " is tagged '" + g.meta.stage + "'");
  }
  apply_checkpoint(a, m.adaptor.params());
  apply_checkpoint(g, m.unet.params());
  m.adaptor.params().set_trainable(false);
  m.unet.params().set_trainable(false);
  m.checkpoint_ids = {a.id, g.id};
  return m;
}

Models untrained_models(const RunConfig& config) {
  Models m(config);
  m.adaptor.params().set_trainable(false);
  m.unet.params().set_trainable(false);
  return m;
}

}  // namespace objcomp::pipeline
