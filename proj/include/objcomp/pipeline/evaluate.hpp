#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "objcomp/datagen/triplet.hpp"
#include "objcomp/pipeline/stages.hpp"

namespace objcomp::pipeline {

/// Hole bbox of a {0, 1} mask grown to a square around its centre, shifted to
/// stay on the canvas (clipped when larger). Integer pixel extents.
BBox crop_region(const Image& mask);

/// Six scalars: frechet, clip_image and clip_text, each "_full" and "_crop".
using MetricReport = std::map<std::string, double>;

struct EvalSet {
  std::vector<datagen::TrainingTriplet> triplets;
  std::vector<generator::CompositeRequest> requests;
};

/// Held-out triplets perturbed with `rotation_max_deg`; request seeds derive
/// from `seed`.
EvalSet make_eval_set(const RunConfig& config, int count, double rotation_max_deg, std::uint64_t seed);

/// Composites in batches of config.eval.batch.
std::vector<Image> generate_composites(const Models& models, const std::vector<generator::CompositeRequest>& requests,
                                       const RunConfig& config);

MetricReport score_composites(const Models& models, const std::vector<Image>& composites, const EvalSet& set,
                              double logit_scale);

MetricReport evaluate_models(const Models& models, const EvalSet& set, const RunConfig& config);

nlohmann::json report_json(const MetricReport& metrics, const Models& models, const RunConfig& config, int count,
                           double rotation_max_deg);

/// Trained models on the held-out set at eval.rotation_max_deg.
nlohmann::json evaluate(const RunConfig& config);
/// Same protocol at eval.stress_rotation_max_deg with eval.stress_count items.
/// With `with_baseline`, an untrained model is scored on the same set under
/// "untrained_metrics".
nlohmann::json stress_eval(const RunConfig& config, bool with_baseline);

}  // namespace objcomp::pipeline
