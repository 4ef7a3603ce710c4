#pragma once

#include <array>

#include <Eigen/Core>

namespace objcomp::datagen {

struct Point2 {
  double x = 0, y = 0;
};

struct PointPair {
  Point2 source;
  Point2 destination;
};

using FourPairs = std::array<PointPair, 4>;

/// Projective transform normalised so that matrix(2, 2) == 1.
struct Homography {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();

  Point2 apply(const Point2& p) const;
  Homography inverse() const;
  static Homography identity() { return {}; }
};

/// Direct linear transform over four correspondences (Hartley-normalised,
/// null vector from SVD). Throws DegenerateInputError when any three source
/// (or destination) points are collinear.
Homography homography_from_correspondences(const FourPairs& pairs);

/// Largest Euclidean distance between H(source) and destination.
double max_reprojection_error(const Homography& h, const FourPairs& pairs);

}  // namespace objcomp::datagen
