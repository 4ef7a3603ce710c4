#include "objcomp/datagen/homography.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::datagen {

Point2 Homography::apply(const Point2& p) const {
  const Eigen::Vector3d v = matrix * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

Homography Homography::inverse() const {
  Homography out;
  out.matrix = matrix.inverse();
  out.matrix /= out.matrix(2, 2);
  return out;
}

namespace {

bool has_collinear_triple(const std::array<Point2, 4>& pts) {
  double scale = 0.0;
  for (const auto& a : pts)
    for (const auto& b : pts) scale = std::max(scale, std::hypot(a.x - b.x, a.y - b.y));
  if (scale == 0.0) return true;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k) {
        const double cross = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) - (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
        if (std::abs(cross) <= 1e-9 * scale * scale) return true;
      }
  return false;
}

// Similarity transform taking the points to zero mean and mean distance sqrt(2).
Eigen::Matrix3d normaliser(const std::array<Point2, 4>& pts) {
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= 4;
  my /= 4;
  double dist = 0;
  for (const auto& p : pts) dist += std::hypot(p.x - mx, p.y - my);
  dist /= 4;
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  return t;
}

}  // namespace

Homography homography_from_correspondences(const FourPairs& pairs) {
  std::array<Point2, 4> src, dst;
  for (int i = 0; i < 4; ++i) {
    src[i] = pairs[i].source;
    dst[i] = pairs[i].destination;
  }
  if (has_collinear_triple(src)) throw DegenerateInputError("homography: three source points are collinear");
  if (has_collinear_triple(dst)) throw DegenerateInputError("homography: three destination points are collinear");

  const Eigen::Matrix3d ts = normaliser(src);
  const Eigen::Matrix3d td = normaliser(dst);
  Eigen::Matrix<double, 8, 9> a;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    a.row(2 * i) << -p.x(), -p.y(), -1, 0, 0, 0, q.x() * p.x(), q.x() * p.y(), q.x();
    a.row(2 * i + 1) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d full = td.inverse() * hn * ts;
  if (std::abs(full(2, 2)) < 1e-12 * full.cwiseAbs().maxCoeff()) {
    throw DegenerateInputError("homography: transform maps the origin to infinity");
  }
  full /= full(2, 2);
  Homography out;
  out.matrix = full;
  return out;
}

double max_reprojection_error(const Homography& h, const FourPairs& pairs) {
  double worst = 0.0;
  for (const auto& pr : pairs) {
    const Point2 q = h.apply(pr.source);
    worst = std::max(worst, std::hypot(q.x - pr.destination.x, q.y - pr.destination.y));
  }
  return worst;
}

}  // namespace objcomp::datagen
