#pragma once

#include <cstdint>
#include <string>

#include "objcomp/datagen/perturb.hpp"
#include "objcomp/datagen/scene.hpp"

namespace objcomp::datagen {

/// (object, background, mask) unit plus caption. The background doubles as
/// the ground truth; mask is 0 inside `bbox` and 1 elsewhere.
struct TrainingTriplet {
  std::string id;
  Image object_image;      // RGBA, tight around the perturbed object
  Image background_image;  // RGB
  Image mask;              // single channel, {0, 1}
  std::string caption;
  BBox bbox;

  bool operator==(const TrainingTriplet&) const = default;
};

/// Plain segmented crop: the bbox region with RGB zeroed outside the mask and
/// alpha equal to the mask.
Image segment_object(const Scene& scene, int object_index);

/// Perturbs one scene object (colour shift, four-point projective warp, then
/// rotation) into the object image; background is the untouched scene and the
/// hole is the original object's bbox.
TrainingTriplet make_training_triplet(const Scene& scene, int object_index, const PerturbationSpec& pert);

struct AugmentationSpec {
  double min_crop_frac = 0.6;
  double max_shift_frac = 0.2;
  std::uint64_t rng_seed = 0;
};

/// Square crop window in background pixel coordinates; may extend past the
/// canvas by the shift margin (filled with black, mask 1).
struct CropWindow {
  double x = 0, y = 0, size = 0;
};

struct AugmentResult {
  TrainingTriplet triplet;
  bool applied = true;  // false when no valid window exists; triplet unchanged
  CropWindow window;
};

/// Resamples background and bbox through `window` back to the canvas size and
/// rebuilds the mask from the mapped bbox.
TrainingTriplet apply_crop_window(const TrainingTriplet& triplet, const CropWindow& window);
AugmentResult crop_shift_augment(const TrainingTriplet& triplet, const AugmentationSpec& spec);
AugmentResult crop_shift_augment(const TrainingTriplet& triplet, const AugmentationSpec& spec, Rng& rng);

}  // namespace objcomp::datagen
