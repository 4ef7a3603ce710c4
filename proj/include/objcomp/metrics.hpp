#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "objcomp/encoders.hpp"
#include "objcomp/image.hpp"

namespace objcomp::metrics {

using FeatureFn = std::function<std::vector<double>(const Image&)>;
using CaptionFn = std::function<std::vector<double>(const std::string&)>;

struct MetricConfig {
  double logit_scale = 100.0;
  /// Unit-norm image feature.
  FeatureFn feature_fn;
  /// Unit-norm caption feature in the same space as feature_fn.
  CaptionFn caption_fn;
  /// Features for the Frechet distance (need not be normalised).
  FeatureFn frechet_fn;
};

/// Projected class token / start token of the toy encoders, L2-normalised,
/// and the raw class token for the Frechet distance.
MetricConfig default_metric_config(const encoders::VisualEncoder<float>& visual,
                                   const encoders::TextEncoder<float>& text, double logit_scale = 100.0);

/// mean_i s * <f(pred_i), f(gt_i)>
double clip_image_score(const std::vector<Image>& pred, const std::vector<Image>& gt, const MetricConfig& config);
/// mean_i s * <f(pred_i), g(caption_i)>
double clip_text_score(const std::vector<Image>& pred, const std::vector<std::string>& captions,
                       const MetricConfig& config);

/// Rows are samples.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
double frechet_from_moments(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                            const Eigen::MatrixXd& cov_b);

/// Symmetric PSD square root; negative eigenvalues are clamped to 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

Eigen::MatrixXd feature_matrix(const std::vector<Image>& images, const FeatureFn& fn);

}  // namespace objcomp::metrics
