#include "objcomp/pipeline/config.hpp"

#include <cmath>
#include <fstream>

#include "objcomp/errors.hpp"

namespace objcomp::pipeline {

using nlohmann::json;

RunConfig RunConfig::desk() {
  RunConfig c;
  c.dataset.count = 256;
  c.dataset.canvas_size = 64;
  c.dataset.max_objects = 2;
  c.dataset.seed = 1;
  c.encoders = encoders::EncoderConfig::desk();
  c.adaptor = adaptor::AdaptorConfig::for_encoders(c.encoders);
  c.unet.context_dim = c.encoders.text_dim;
  c.unet.base_channels = 16;
  c.unet.groups = 8;
  c.stages["stage0"] = {.learning_rate = 4e-4, .steps = 1200, .batch_size = 8, .seed = 100, .warmup_steps = 50};
  c.stages["stage1"] = {.learning_rate = 1e-3, .steps = 500, .batch_size = 32, .seed = 101, .warmup_steps = 0};
  c.stages["stage2"] = {.learning_rate = 1e-4, .steps = 500, .batch_size = 8, .seed = 102, .warmup_steps = 0};
  c.stages["stage3"] = {.learning_rate = 2e-4, .steps = 2000, .batch_size = 8, .seed = 103, .warmup_steps = 0};
  return c;
}

std::map<std::string, TrainSchedule> RunConfig::full_scale_schedules(long dataset_size) {
  const auto steps = [&](long epochs, int batch) { return (epochs * dataset_size + batch - 1) / batch; };
  std::map<std::string, TrainSchedule> s;
  s["stage1"] = {.learning_rate = 1e-4, .steps = steps(15, 2048), .batch_size = 2048, .seed = 101, .warmup_steps = 0};
  s["stage2"] = {.learning_rate = 2e-5, .steps = steps(13, 512), .batch_size = 512, .seed = 102, .warmup_steps = 0};
  s["stage3"] = {.learning_rate = 4e-5, .steps = steps(20, 576), .batch_size = 576, .seed = 103, .warmup_steps = 0};
  return s;
}

const TrainSchedule& RunConfig::stage(int id) const {
  const auto it = stages.find("stage" + std::to_string(id));
  if (it == stages.end()) throw ConfigError("no schedule for stage " + std::to_string(id));
  return it->second;
}

void RunConfig::validate() const {
  encoders.validate();
  adaptor.validate();
  unet.validate();
  dataset.perturbation.validate();
  if (adaptor.in_len != encoders.visual_tokens() || adaptor.in_dim != encoders.visual_dim) {
    throw ConfigError("adaptor input (" + std::to_string(adaptor.in_len) + "x" + std::to_string(adaptor.in_dim) +
                      ") does not match visual encoder output (" + std::to_string(encoders.visual_tokens()) + "x" +
                      std::to_string(encoders.visual_dim) + ")");
  }
  if (adaptor.out_len != encoders.text_len || adaptor.out_dim != encoders.text_dim) {
    throw ConfigError("adaptor output must match the text embedding shape");
  }
  if (unet.context_dim != adaptor.out_dim) throw ConfigError("unet context_dim must equal adaptor out_dim");
  if (unet.image_size != dataset.canvas_size) throw ConfigError("unet image_size must equal dataset canvas_size");
  if (unet.in_channels != 7 || unet.out_channels != 3) throw ConfigError("unet must map 7 input channels to 3");
  for (int i = 0; i <= 3; ++i) {
    const auto& s = stage(i);
    if (s.batch_size <= 0 || s.steps < 0 || s.learning_rate < 0) {
      throw ConfigError("stage" + std::to_string(i) + " schedule has invalid values");
    }
  }
  if (diffusion.sample_steps < 1 || diffusion.sample_steps > diffusion.train_steps ||
      diffusion.eval_sample_steps < 1 || diffusion.eval_sample_steps > diffusion.train_steps) {
    throw ConfigError("sampling steps must be in [1, diffusion.train_steps]");
  }
  if (eval.count < 2 || eval.stress_count < 2 || eval.batch < 1) throw ConfigError("eval counts too small");
  if (stage1_pairs < 1) throw ConfigError("stage1_pairs must be positive");
}

namespace {

json perturbation_json(const datagen::PerturbationSpec& p) {
  return {{"corner_offset_frac", p.corner_offset_frac},
          {"rotation_max_deg", p.rotation_max_deg},
          {"hue_shift_max", p.hue_shift_max},
          {"sat_scale_range", p.sat_scale_range},
          {"value_scale_range", p.value_scale_range}};
}

datagen::PerturbationSpec perturbation_from(const json& j, datagen::PerturbationSpec p) {
  p.corner_offset_frac = j.value("corner_offset_frac", p.corner_offset_frac);
  p.rotation_max_deg = j.value("rotation_max_deg", p.rotation_max_deg);
  p.hue_shift_max = j.value("hue_shift_max", p.hue_shift_max);
  p.sat_scale_range = j.value("sat_scale_range", p.sat_scale_range);
  p.value_scale_range = j.value("value_scale_range", p.value_scale_range);
  return p;
}

}  // namespace

json RunConfig::to_json() const {
  json stages_json = json::object();
  for (const auto& [k, v] : stages) stages_json[k] = v.to_json();
  return {
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"dataset_dir", dataset_dir.string()},
      {"dataset",
       {{"count", dataset.count},
        {"canvas_size", dataset.canvas_size},
        {"max_objects", dataset.max_objects},
        {"seed", dataset.seed},
        {"perturbation", perturbation_json(dataset.perturbation)}}},
      {"stage1_pairs", stage1_pairs},
      {"encoders", encoders.to_json()},
      {"adaptor", adaptor.to_json()},
      {"unet", unet.to_json()},
      {"diffusion",
       {{"train_steps", diffusion.train_steps},
        {"beta_start", diffusion.beta_start},
        {"beta_end", diffusion.beta_end},
        {"sample_steps", diffusion.sample_steps},
        {"eval_sample_steps", diffusion.eval_sample_steps}}},
      {"augmentation",
       {{"min_crop_frac", augmentation.spec.min_crop_frac},
        {"max_shift_frac", augmentation.spec.max_shift_frac},
        {"stage2", augmentation.stage2},
        {"stage3", augmentation.stage3}}},
      {"stages", stages_json},
      {"eval",
       {{"count", eval.count},
        {"rotation_max_deg", eval.rotation_max_deg},
        {"stress_count", eval.stress_count},
        {"stress_rotation_max_deg", eval.stress_rotation_max_deg},
        {"seed", eval.seed},
        {"logit_scale", eval.logit_scale},
        {"batch", eval.batch}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c = desk();
  try {
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir.string());
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.count = d.value("count", c.dataset.count);
      c.dataset.canvas_size = d.value("canvas_size", c.dataset.canvas_size);
      c.dataset.max_objects = d.value("max_objects", c.dataset.max_objects);
      c.dataset.seed = d.value("seed", c.dataset.seed);
      if (d.contains("perturbation")) {
        c.dataset.perturbation = perturbation_from(d.at("perturbation"), c.dataset.perturbation);
      }
    }
    c.stage1_pairs = j.value("stage1_pairs", c.stage1_pairs);
    if (j.contains("encoders")) c.encoders = encoders::EncoderConfig::from_json(j.at("encoders"));
    if (j.contains("adaptor")) {
      c.adaptor = adaptor::AdaptorConfig::from_json(j.at("adaptor"));
    } else {
      c.adaptor = adaptor::AdaptorConfig::for_encoders(c.encoders);
    }
    if (j.contains("unet")) {
      json u = c.unet.to_json();
      u.update(j.at("unet"));
      c.unet = generator::UNetConfig::from_json(u);
    }
    if (j.contains("diffusion")) {
      const auto& d = j.at("diffusion");
      c.diffusion.train_steps = d.value("train_steps", c.diffusion.train_steps);
      c.diffusion.beta_start = d.value("beta_start", c.diffusion.beta_start);
      c.diffusion.beta_end = d.value("beta_end", c.diffusion.beta_end);
      c.diffusion.sample_steps = d.value("sample_steps", c.diffusion.sample_steps);
      c.diffusion.eval_sample_steps = d.value("eval_sample_steps", c.diffusion.eval_sample_steps);
    }
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      c.augmentation.spec.min_crop_frac = a.value("min_crop_frac", c.augmentation.spec.min_crop_frac);
      c.augmentation.spec.max_shift_frac = a.value("max_shift_frac", c.augmentation.spec.max_shift_frac);
      c.augmentation.stage2 = a.value("stage2", c.augmentation.stage2);
      c.augmentation.stage3 = a.value("stage3", c.augmentation.stage3);
    }
    if (j.contains("stages")) {
      for (const auto& [k, v] : j.at("stages").items()) {
        const auto it = c.stages.find(k);
        c.stages[k] = TrainSchedule::from_json(v, it == c.stages.end() ? TrainSchedule{} : it->second);
      }
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.count = e.value("count", c.eval.count);
      c.eval.rotation_max_deg = e.value("rotation_max_deg", c.eval.rotation_max_deg);
      c.eval.stress_count = e.value("stress_count", c.eval.stress_count);
      c.eval.stress_rotation_max_deg = e.value("stress_rotation_max_deg", c.eval.stress_rotation_max_deg);
      c.eval.seed = e.value("seed", c.eval.seed);
      c.eval.logit_scale = e.value("logit_scale", c.eval.logit_scale);
      c.eval.batch = e.value("batch", c.eval.batch);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(doc);
}

json apply_overrides(json doc, const std::vector<std::string>& overrides) {
  const json reference = RunConfig::desk().to_json();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json::json_pointer ptr;
    std::size_t start = 0;
    while (start <= key.size()) {
      const auto dot = key.find('.', start);
      ptr /= key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (!reference.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
    doc[ptr] = value;
  }
  return doc;
}

}  // namespace objcomp::pipeline
