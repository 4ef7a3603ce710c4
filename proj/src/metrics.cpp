#include "objcomp/metrics.hpp"

#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::metrics {

MetricConfig default_metric_config(const encoders::VisualEncoder<float>& visual,
                                   const encoders::TextEncoder<float>& text, double logit_scale) {
  MetricConfig c;
  c.logit_scale = logit_scale;
  c.feature_fn = [&visual](const Image& img) { return visual.image_feature(img); };
  c.caption_fn = [&text](const std::string& caption) { return text.caption_feature(caption); };
  c.frechet_fn = [&visual](const Image& img) { return visual.class_token(img); };
  return c;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("feature dimensions differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_scale(const MetricConfig& c) {
  if (!(c.logit_scale > 0)) throw ConfigError("logit_scale must be positive");
}

}  // namespace

double clip_image_score(const std::vector<Image>& pred, const std::vector<Image>& gt, const MetricConfig& config) {
  check_scale(config);
  if (pred.size() != gt.size() || pred.empty()) throw ShapeError("clip_image_score: batches must be equal and non-empty");
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += dot(config.feature_fn(pred[i]), config.feature_fn(gt[i]));
  return config.logit_scale * total / static_cast<double>(pred.size());
}

double clip_text_score(const std::vector<Image>& pred, const std::vector<std::string>& captions,
                       const MetricConfig& config) {
  check_scale(config);
  if (pred.size() != captions.size() || pred.empty()) {
    throw ShapeError("clip_text_score: batches must be equal and non-empty");
  }
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += dot(config.feature_fn(pred[i]), config.caption_fn(captions[i]));
  return config.logit_scale * total / static_cast<double>(pred.size());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_from_moments(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                            const Eigen::MatrixXd& cov_b) {
  const auto d = mu_a.size();
  if (mu_b.size() != d || cov_a.rows() != d || cov_a.cols() != d || cov_b.rows() != d || cov_b.cols() != d) {
    throw ShapeError("frechet: moment dimensions differ");
  }
  const Eigen::MatrixXd ra = psd_sqrt(cov_a);
  const Eigen::MatrixXd cross = psd_sqrt(ra * cov_b * ra);
  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::max(value, 0.0);
}

namespace {

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeError("frechet: feature dimensions differ");
  if (a.rows() < 2 || b.rows() < 2) throw ShapeError("frechet: need at least two samples per set");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  return frechet_from_moments(mu_a, cov_a, mu_b, cov_b);
}

Eigen::MatrixXd feature_matrix(const std::vector<Image>& images, const FeatureFn& fn) {
  if (images.empty()) return {};
  std::vector<std::vector<double>> rows;
  for (const auto& img : images) rows.push_back(fn(img));
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ShapeError("feature_matrix: inconsistent feature sizes");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace objcomp::metrics
