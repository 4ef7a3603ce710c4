#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "objcomp/image.hpp"

namespace objcomp::datagen {

enum class ShapeKind { Circle, Square, Triangle, Star };
enum class BackgroundTexture { Flat, Gradient, Noise };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);
std::string to_string(BackgroundTexture texture);
BackgroundTexture background_texture_from_string(const std::string& name);

struct SceneSpec {
  int canvas_size = 64;
  int num_objects = 1;
  std::vector<ShapeKind> shape_vocabulary{ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Star};
  BackgroundTexture background_texture = BackgroundTexture::Gradient;
  std::uint64_t rng_seed = 0;

  /// Object bbox area bounds as fractions of canvas area.
  static constexpr double kMinAreaFrac = 0.02;
  static constexpr double kMaxAreaFrac = 0.40;

  /// Throws ConfigError when the SceneSpec violates its invariants.
  void validate() const;
};

struct Scene {
  Image image;               // RGB, on the 8-bit grid
  std::vector<Image> masks;  // one binary single-channel mask per object
  std::vector<std::string> labels;
  std::vector<BBox> boxes;   // tight integer bbox of each mask
};

/// Raised when objects cannot be placed without overlap.
class UnsatisfiableSceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic procedural scene. Rejection-samples each object (kind, size,
/// position) up to 100 times until it is disjoint from earlier objects and its
/// bbox area lies within the size filter.
Scene generate_scene(const SceneSpec& spec);

/// Binary mask bounding box (integer pixel extents). Empty mask -> zero box.
BBox mask_bbox(const Image& mask);

}  // namespace objcomp::datagen
