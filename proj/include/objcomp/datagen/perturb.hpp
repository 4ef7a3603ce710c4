#pragma once

#include <array>
#include <cstdint>

#include "objcomp/datagen/homography.hpp"
#include "objcomp/image.hpp"
#include "objcomp/rng.hpp"

namespace objcomp::datagen {

struct PerturbationSpec {
  /// Corner offset bound as a fraction of the bbox diagonal (infinity norm).
  double corner_offset_frac = 0.15;
  /// Rotation drawn from [-rotation_max_deg, +rotation_max_deg].
  double rotation_max_deg = 20.0;
  /// Stress-test preset for rotation_max_deg.
  static constexpr double kStressRotationDeg = 40.0;
  double hue_shift_max = 18.0;
  std::array<double, 2> sat_scale_range{0.7, 1.3};
  std::array<double, 2> value_scale_range{0.7, 1.3};
  std::uint64_t rng_seed = 0;

  static PerturbationSpec identity(std::uint64_t seed = 0);
  void validate() const;
};

using Hsv = std::array<double, 3>;  // hue degrees [0, 360), saturation, value
using Rgb = std::array<double, 3>;

Hsv rgb_to_hsv(const Rgb& rgb);
Rgb hsv_to_rgb(const Hsv& hsv);

struct ColorShift {
  double hue_deg = 0.0;
  double sat_scale = 1.0;
  double value_scale = 1.0;
};

ColorShift draw_color_shift(Rng& rng, const PerturbationSpec& spec);
/// Applies the shift to the RGB channels; an alpha channel passes through.
Image apply_color_shift(const Image& img, const ColorShift& shift);
/// Seeded jitter: draw_color_shift from spec.rng_seed, then apply.
Image color_jitter(const Image& img, const PerturbationSpec& spec);

/// Bbox corners in screen-counterclockwise order: TL, BL, BR, TR.
std::array<Point2, 4> bbox_corners(const BBox& box);

/// Jitters each bbox corner by a uniform offset with infinity norm at most
/// corner_offset_frac * diagonal. Resamples (up to 100 tries) until the
/// destination quad is convex with the source orientation, else returns
/// zero offsets.
FourPairs perturb_four_points(const BBox& box, Rng& rng, const PerturbationSpec& spec);
FourPairs perturb_four_points(const BBox& box, const PerturbationSpec& spec);

bool is_convex_same_orientation(const std::array<Point2, 4>& quad, const std::array<Point2, 4>& reference);

struct WarpResult {
  Image pixels;  // RGBA, alpha equals the warped mask
  Image mask;    // single channel, binary
};

/// Maps the object through `h` followed by a rotation of `angle_deg` (positive
/// is counterclockwise on screen) about the image centre. Colours are sampled
/// bilinearly, the mask by nearest neighbour, both through the same inverse
/// map; samples outside the source are transparent. Output keeps the input
/// size. Throws EmptyResultError when no mask pixel survives.
WarpResult warp_and_rotate(const Image& object, const Image& mask, const Homography& h, double angle_deg);

/// Rotation about (cx, cy) as a homography; exact for multiples of 90 degrees.
Homography rotation_about(double angle_deg, double cx, double cy);

}  // namespace objcomp::datagen
