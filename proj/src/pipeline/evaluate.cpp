#include "objcomp/pipeline/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "objcomp/datagen/scene.hpp"
#include "objcomp/errors.hpp"
#include "objcomp/metrics.hpp"

namespace objcomp::pipeline {

BBox crop_region(const Image& mask) {
  if (mask.channels != 1) throw ShapeError("crop_region: mask must be single-channel");
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y, 0) == 0.0f) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw EmptyResultError("crop_region: mask has no hole");
  const int w = x1 - x0 + 1, h = y1 - y0 + 1;
  const int side = std::min({std::max(w, h), mask.width, mask.height});
  int x = x0 + (w - side) / 2;
  int y = y0 + (h - side) / 2;
  x = std::clamp(x, 0, mask.width - side);
  y = std::clamp(y, 0, mask.height - side);
  return {static_cast<double>(x), static_cast<double>(y), static_cast<double>(side), static_cast<double>(side)};
}

EvalSet make_eval_set(const RunConfig& config, int count, double rotation_max_deg, std::uint64_t seed) {
  datagen::DatasetSpec spec = config.dataset;
  spec.count = count;
  spec.seed = seed;
  spec.perturbation.rotation_max_deg = rotation_max_deg;
  EvalSet set;
  set.triplets = datagen::generate_triplets(spec);
  for (std::size_t i = 0; i < set.triplets.size(); ++i) {
    set.requests.push_back(
        generator::request_from_triplet(set.triplets[i], config.diffusion.eval_sample_steps, Rng::derive(seed, i)));
  }
  return set;
}

std::vector<Image> generate_composites(const Models& models, const std::vector<generator::CompositeRequest>& requests,
                                       const RunConfig& config) {
  const auto schedule = make_schedule(config);
  std::vector<Image> out;
  out.reserve(requests.size());
  const std::size_t batch = static_cast<std::size_t>(config.eval.batch);
  for (std::size_t i = 0; i < requests.size(); i += batch) {
    const std::vector<generator::CompositeRequest> chunk(requests.begin() + i,
                                                         requests.begin() + std::min(requests.size(), i + batch));
    auto images = generator::sample_composites(chunk, models.adaptor, models.visual, models.unet, schedule);
    for (auto& img : images) out.push_back(std::move(img));
  }
  return out;
}

MetricReport score_composites(const Models& models, const std::vector<Image>& composites, const EvalSet& set,
                              double logit_scale) {
  if (composites.size() != set.triplets.size()) throw ShapeError("one composite per evaluation triplet is required");
  const auto mc = metrics::default_metric_config(models.visual, models.text, logit_scale);
  std::vector<Image> gt, pred_crop, gt_crop;
  std::vector<std::string> captions;
  for (std::size_t i = 0; i < composites.size(); ++i) {
    const auto& t = set.triplets[i];
    gt.push_back(t.background_image);
    captions.push_back(t.caption);
    const BBox r = crop_region(t.mask);
    const int x = static_cast<int>(r.x), y = static_cast<int>(r.y), s = static_cast<int>(r.w);
    pred_crop.push_back(crop(composites[i], x, y, s, s));
    gt_crop.push_back(crop(t.background_image, x, y, s, s));
  }
  MetricReport report;
  report["frechet_full"] = metrics::frechet_distance(metrics::feature_matrix(composites, mc.frechet_fn),
                                                     metrics::feature_matrix(gt, mc.frechet_fn));
  report["frechet_crop"] = metrics::frechet_distance(metrics::feature_matrix(pred_crop, mc.frechet_fn),
                                                     metrics::feature_matrix(gt_crop, mc.frechet_fn));
  report["clip_image_full"] = metrics::clip_image_score(composites, gt, mc);
  report["clip_image_crop"] = metrics::clip_image_score(pred_crop, gt_crop, mc);
  report["clip_text_full"] = metrics::clip_text_score(composites, captions, mc);
  report["clip_text_crop"] = metrics::clip_text_score(pred_crop, captions, mc);
  return report;
}

MetricReport evaluate_models(const Models& models, const EvalSet& set, const RunConfig& config) {
  return score_composites(models, generate_composites(models, set.requests, config), set, config.eval.logit_scale);
}

nlohmann::json report_json(const MetricReport& metrics, const Models& models, const RunConfig& config, int count,
                           double rotation_max_deg) {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  return {{"metrics", m},
          {"count", count},
          {"batch_size", config.eval.batch},
          {"sample_steps", config.diffusion.eval_sample_steps},
          {"rotation_max_deg", rotation_max_deg},
          {"checkpoint_ids", models.checkpoint_ids},
          {"config", config.to_json()}};
}

nlohmann::json evaluate(const RunConfig& config) {
  const Models models = load_trained_models(config);
  const auto set = make_eval_set(config, config.eval.count, config.eval.rotation_max_deg, config.eval.seed);
  return report_json(evaluate_models(models, set, config), models, config, config.eval.count,
                     config.eval.rotation_max_deg);
}

nlohmann::json stress_eval(const RunConfig& config, bool with_baseline) {
  const Models models = load_trained_models(config);
  const auto set = make_eval_set(config, config.eval.stress_count, config.eval.stress_rotation_max_deg,
                                 Rng::derive(config.eval.seed, 40));
  auto report = report_json(evaluate_models(models, set, config), models, config, config.eval.stress_count,
                            config.eval.stress_rotation_max_deg);
  if (with_baseline) {
    const Models fresh = untrained_models(config);
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : evaluate_models(fresh, set, config)) m[k] = v;
    report["untrained_metrics"] = m;
  }
  return report;
}

}  // namespace objcomp::pipeline
