#include "objcomp/datagen/triplet.hpp"

#include <algorithm>
#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::datagen {

Image segment_object(const Scene& scene, int object_index) {
  const BBox& box = scene.boxes.at(object_index);
  const Image& mask = scene.masks.at(object_index);
  const int x0 = static_cast<int>(box.x), y0 = static_cast<int>(box.y);
  const int w = static_cast<int>(box.w), h = static_cast<int>(box.h);
  Image out(w, h, 4, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask.at(x0 + x, y0 + y, 0) < 0.5f) continue;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = scene.image.at(x0 + x, y0 + y, c);
      out.at(x, y, 3) = 1.0f;
    }
  return out;
}

TrainingTriplet make_training_triplet(const Scene& scene, int object_index, const PerturbationSpec& pert) {
  pert.validate();
  if (object_index < 0 || object_index >= static_cast<int>(scene.masks.size())) {
    throw std::out_of_range("make_training_triplet: object index " + std::to_string(object_index) + " out of range");
  }
  const BBox& box = scene.boxes[object_index];
  const double canvas_area = static_cast<double>(scene.image.width) * scene.image.height;
  const double frac = box.area() / canvas_area;
  if (frac < SceneSpec::kMinAreaFrac || frac > SceneSpec::kMaxAreaFrac) {
    throw ConfigError("make_training_triplet: object " + std::to_string(object_index) + " fails the size filter");
  }

  Rng rng(pert.rng_seed);
  const auto pairs_canvas = perturb_four_points(box, rng, pert);
  const double angle = rng.uniform(-pert.rotation_max_deg, pert.rotation_max_deg);
  const ColorShift shift = draw_color_shift(rng, pert);

  // Square working window around the object, large enough that neither the
  // corner jitter nor the rotation can push the object out of it.
  const double diag = std::hypot(box.w, box.h);
  const int side = static_cast<int>(std::ceil(diag + 2.0 * std::sqrt(2.0) * pert.corner_offset_frac * diag)) + 4;
  const int ox = static_cast<int>(std::floor(box.x + box.w / 2.0)) - side / 2;
  const int oy = static_cast<int>(std::floor(box.y + box.h / 2.0)) - side / 2;

  Image window(side, side, 4, 0.0f);
  Image window_mask(side, side, 1, 0.0f);
  const Image& mask = scene.masks[object_index];
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const int sx = ox + x, sy = oy + y;
      if (sx < 0 || sy < 0 || sx >= scene.image.width || sy >= scene.image.height) continue;
      if (mask.at(sx, sy, 0) < 0.5f) continue;
      for (int c = 0; c < 3; ++c) window.at(x, y, c) = scene.image.at(sx, sy, c);
      window.at(x, y, 3) = 1.0f;
      window_mask.at(x, y, 0) = 1.0f;
    }

  FourPairs pairs = pairs_canvas;
  for (auto& p : pairs) {
    p.source.x -= ox;
    p.source.y -= oy;
    p.destination.x -= ox;
    p.destination.y -= oy;
  }
  const Homography h = homography_from_correspondences(pairs);
  const WarpResult warped = warp_and_rotate(apply_color_shift(window, shift), window_mask, h, angle);

  const BBox tight = mask_bbox(warped.mask);
  TrainingTriplet t;
  t.object_image = crop(warped.pixels, static_cast<int>(tight.x), static_cast<int>(tight.y), static_cast<int>(tight.w),
                        static_cast<int>(tight.h));
  quantize8(t.object_image);
  t.background_image = scene.image;
  t.bbox = box;
  t.mask = hole_mask(scene.image.width, scene.image.height, box);
  t.caption = scene.labels[object_index];
  return t;
}

TrainingTriplet apply_crop_window(const TrainingTriplet& triplet, const CropWindow& window) {
  const Image& bg = triplet.background_image;
  const int w = bg.width, h = bg.height;
  TrainingTriplet out = triplet;
  out.background_image = Image(w, h, bg.channels, 0.0f);
  const double sx = window.size / w, sy = window.size / h;
  for (int y = 0; y < h; ++y) {
    const double py = window.y + (y + 0.5) * sy;
    for (int x = 0; x < w; ++x) {
      const double px = window.x + (x + 0.5) * sx;
      if (px < 0 || py < 0 || px >= w || py >= h) continue;
      for (int c = 0; c < bg.channels; ++c) out.background_image.at(x, y, c) = sample_bilinear(bg, px, py, c);
    }
  }
  quantize8(out.background_image);
  out.bbox = {(triplet.bbox.x - window.x) / sx, (triplet.bbox.y - window.y) / sy, triplet.bbox.w / sx,
              triplet.bbox.h / sy};
  out.mask = hole_mask(w, h, out.bbox);
  return out;
}

AugmentResult crop_shift_augment(const TrainingTriplet& triplet, const AugmentationSpec& spec, Rng& rng) {
  const double canvas = triplet.background_image.width;
  const BBox& box = triplet.bbox;
  const double shift = spec.max_shift_frac * canvas;
  const double min_side = std::max(spec.min_crop_frac * canvas, std::max(box.w, box.h));
  if (min_side > canvas) return {triplet, false, {0, 0, canvas}};
  const double side = rng.uniform(min_side, canvas);

  const double x_lo = std::max(box.right() - side, -shift), x_hi = std::min(box.x, canvas + shift - side);
  const double y_lo = std::max(box.bottom() - side, -shift), y_hi = std::min(box.y, canvas + shift - side);
  if (x_lo > x_hi || y_lo > y_hi) return {triplet, false, {0, 0, canvas}};
  const CropWindow window{rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), side};
  return {apply_crop_window(triplet, window), true, window};
}

AugmentResult crop_shift_augment(const TrainingTriplet& triplet, const AugmentationSpec& spec) {
  Rng rng(spec.rng_seed);
  return crop_shift_augment(triplet, spec, rng);
}

}  // namespace objcomp::datagen
