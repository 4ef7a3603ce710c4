#include "objcomp/datagen/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::datagen {

PerturbationSpec PerturbationSpec::identity(std::uint64_t seed) {
  PerturbationSpec s;
  s.corner_offset_frac = 0.0;
  s.rotation_max_deg = 0.0;
  s.hue_shift_max = 0.0;
  s.sat_scale_range = {1.0, 1.0};
  s.value_scale_range = {1.0, 1.0};
  s.rng_seed = seed;
  return s;
}

void PerturbationSpec::validate() const {
  if (!(corner_offset_frac >= 0.0 && corner_offset_frac < 0.5)) {
    throw ConfigError("corner_offset_frac must be in [0, 0.5), got " + std::to_string(corner_offset_frac));
  }
  if (!(rotation_max_deg >= 0.0 && rotation_max_deg < 90.0)) {
    throw ConfigError("rotation_max_deg must be in [0, 90), got " + std::to_string(rotation_max_deg));
  }
  if (hue_shift_max < 0.0) throw ConfigError("hue_shift_max must be non-negative");
  for (const auto* r : {&sat_scale_range, &value_scale_range}) {
    if (!((*r)[0] > 0.0 && (*r)[1] >= (*r)[0])) throw ConfigError("colour scale ranges must be positive intervals");
  }
}

Hsv rgb_to_hsv(const Rgb& rgb) {
  const double r = rgb[0], g = rgb[1], b = rgb[2];
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
  }
  if (h < 0.0) h += 360.0;
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

Rgb hsv_to_rgb(const Hsv& hsv) {
  double h = std::fmod(hsv[0], 360.0);
  if (h < 0.0) h += 360.0;
  const double s = hsv[1], v = hsv[2];
  const double hp = h / 60.0;
  const int sector = static_cast<int>(std::floor(hp)) % 6;
  const double f = hp - std::floor(hp);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

ColorShift draw_color_shift(Rng& rng, const PerturbationSpec& spec) {
  ColorShift shift;
  shift.hue_deg = rng.uniform(-spec.hue_shift_max, spec.hue_shift_max);
  shift.sat_scale = rng.uniform(spec.sat_scale_range[0], spec.sat_scale_range[1]);
  shift.value_scale = rng.uniform(spec.value_scale_range[0], spec.value_scale_range[1]);
  return shift;
}

Image apply_color_shift(const Image& img, const ColorShift& shift) {
  if (img.channels < 3) throw std::invalid_argument("colour shift needs an RGB(A) image");
  Image out = img;
  const bool identity = shift.hue_deg == 0.0 && shift.sat_scale == 1.0 && shift.value_scale == 1.0;
  if (identity) return out;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      Hsv hsv = rgb_to_hsv({img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)});
      hsv[0] += shift.hue_deg;
      hsv[1] = std::clamp(hsv[1] * shift.sat_scale, 0.0, 1.0);
      hsv[2] = std::clamp(hsv[2] * shift.value_scale, 0.0, 1.0);
      const Rgb rgb = hsv_to_rgb(hsv);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
    }
  }
  return out;
}

Image color_jitter(const Image& img, const PerturbationSpec& spec) {
  Rng rng(spec.rng_seed);
  return apply_color_shift(img, draw_color_shift(rng, spec));
}

std::array<Point2, 4> bbox_corners(const BBox& box) {
  return {Point2{box.x, box.y}, Point2{box.x, box.bottom()}, Point2{box.right(), box.bottom()},
          Point2{box.right(), box.y}};
}

namespace {

double turn(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
}

}  // namespace

bool is_convex_same_orientation(const std::array<Point2, 4>& quad, const std::array<Point2, 4>& reference) {
  const double ref = turn(reference[0], reference[1], reference[2]);
  if (ref == 0.0) return false;
  for (int i = 0; i < 4; ++i) {
    const double t = turn(quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]);
    if (t == 0.0 || (t > 0.0) != (ref > 0.0)) return false;
  }
  return true;
}

FourPairs perturb_four_points(const BBox& box, Rng& rng, const PerturbationSpec& spec) {
  const auto src = bbox_corners(box);
  const double bound = spec.corner_offset_frac * std::hypot(box.w, box.h);
  FourPairs pairs;
  for (int i = 0; i < 4; ++i) pairs[i] = {src[i], src[i]};
  if (bound <= 0.0) return pairs;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::array<Point2, 4> dst;
    for (int i = 0; i < 4; ++i) {
      dst[i].x = src[i].x + rng.uniform(-bound, bound);
      dst[i].y = src[i].y + rng.uniform(-bound, bound);
    }
    if (is_convex_same_orientation(dst, src)) {
      for (int i = 0; i < 4; ++i) pairs[i].destination = dst[i];
      return pairs;
    }
  }
  return pairs;
}

FourPairs perturb_four_points(const BBox& box, const PerturbationSpec& spec) {
  Rng rng(spec.rng_seed);
  return perturb_four_points(box, rng, spec);
}

Homography rotation_about(double angle_deg, double cx, double cy) {
  double c = std::cos(angle_deg * M_PI / 180.0);
  double s = std::sin(angle_deg * M_PI / 180.0);
  const double quarter = angle_deg / 90.0;
  if (quarter == std::round(quarter)) {
    const int k = ((static_cast<int>(std::round(quarter)) % 4) + 4) % 4;
    static constexpr double cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    c = cs[k][0];
    s = cs[k][1];
  }
  // Screen-counterclockwise in y-down coordinates: (dx, dy) -> (c dx + s dy, -s dx + c dy).
  Homography r;
  r.matrix << c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy, 0, 0, 1;
  return r;
}

WarpResult warp_and_rotate(const Image& object, const Image& mask, const Homography& h, double angle_deg) {
  if (mask.width != object.width || mask.height != object.height || mask.channels != 1) {
    throw std::invalid_argument("warp_and_rotate: mask must be single-channel and match the object size");
  }
  const int w = object.width, ht = object.height;
  const Homography inv_rot = rotation_about(-angle_deg, w / 2.0, ht / 2.0);
  const Eigen::Matrix3d inv = h.inverse().matrix * inv_rot.matrix;

  WarpResult out{Image(w, ht, 4, 0.0f), Image(w, ht, 1, 0.0f)};
  const int colour_channels = std::min(object.channels, 3);
  bool any = false;
  for (int y = 0; y < ht; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d q(x + 0.5, y + 0.5, 1.0);
      const Eigen::Vector3d p = inv * q;
      if (p.z() <= 0.0) continue;
      const double px = p.x() / p.z(), py = p.y() / p.z();
      const double fx = std::floor(px), fy = std::floor(py);
      if (fx < 0 || fy < 0 || fx >= w || fy >= ht) continue;
      if (mask.at(static_cast<int>(fx), static_cast<int>(fy), 0) < 0.5f) continue;
      any = true;
      out.mask.at(x, y, 0) = 1.0f;
      out.pixels.at(x, y, 3) = 1.0f;
      for (int c = 0; c < colour_channels; ++c) out.pixels.at(x, y, c) = sample_bilinear(object, px, py, c);
    }
  }
  if (!any) throw EmptyResultError("warp_and_rotate: transform maps the object fully outside the canvas");
  return out;
}

}  // namespace objcomp::datagen
