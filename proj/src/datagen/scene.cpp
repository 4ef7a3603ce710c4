#include "objcomp/datagen/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "objcomp/datagen/perturb.hpp"
#include "objcomp/errors.hpp"
#include "objcomp/rng.hpp"

namespace objcomp::datagen {

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Circle:
      return "circle";
    case ShapeKind::Square:
      return "square";
    case ShapeKind::Triangle:
      return "triangle";
    case ShapeKind::Star:
      return "star";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  for (ShapeKind k : {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Star})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown shape kind: " + name);
}

std::string to_string(BackgroundTexture texture) {
  switch (texture) {
    case BackgroundTexture::Flat:
      return "flat";
    case BackgroundTexture::Gradient:
      return "gradient";
    case BackgroundTexture::Noise:
      return "noise";
  }
  return "unknown";
}

BackgroundTexture background_texture_from_string(const std::string& name) {
  for (auto t : {BackgroundTexture::Flat, BackgroundTexture::Gradient, BackgroundTexture::Noise})
    if (to_string(t) == name) return t;
  throw ConfigError("unknown background texture: " + name);
}

void SceneSpec::validate() const {
  if (canvas_size < 32) throw ConfigError("scene canvas_size must be >= 32, got " + std::to_string(canvas_size));
  if (num_objects < 1 || num_objects > 3) {
    throw ConfigError("scene num_objects must be in [1, 3], got " + std::to_string(num_objects));
  }
  if (shape_vocabulary.empty()) throw ConfigError("scene shape_vocabulary is empty");
}

BBox mask_bbox(const Image& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y, 0) > 0.5f) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
          static_cast<double>(y1 - y0 + 1)};
}

namespace {

struct Vec2 {
  double x, y;
};

bool inside_polygon(const std::vector<Vec2>& poly, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

Image rasterize(ShapeKind kind, int canvas, double cx, double cy, double r) {
  Image mask(canvas, canvas, 1, 0.0f);
  std::vector<Vec2> poly;
  if (kind == ShapeKind::Triangle) {
    poly = {{cx, cy - r}, {cx - r * 0.9, cy + r * 0.8}, {cx + r * 0.9, cy + r * 0.8}};
  } else if (kind == ShapeKind::Star) {
    for (int i = 0; i < 10; ++i) {
      const double ang = -M_PI / 2 + i * M_PI / 5;
      const double rad = (i % 2 == 0) ? r : r * 0.45;
      poly.push_back({cx + rad * std::cos(ang), cy + rad * std::sin(ang)});
    }
  }
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool in = false;
      switch (kind) {
        case ShapeKind::Circle:
          in = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
          break;
        case ShapeKind::Square:
          in = std::abs(px - cx) <= r * 0.85 && std::abs(py - cy) <= r * 0.85;
          break;
        case ShapeKind::Triangle:
        case ShapeKind::Star:
          in = inside_polygon(poly, px, py);
          break;
      }
      if (in) mask.at(x, y, 0) = 1.0f;
    }
  }
  return mask;
}

std::array<float, 3> random_color(Rng& rng, double sat_lo, double sat_hi, double val_lo, double val_hi) {
  const double h = rng.uniform(0.0, 360.0);
  const double s = rng.uniform(sat_lo, sat_hi);
  const double v = rng.uniform(val_lo, val_hi);
  const auto rgb = hsv_to_rgb({h, s, v});
  return {static_cast<float>(rgb[0]), static_cast<float>(rgb[1]), static_cast<float>(rgb[2])};
}

void paint_background(Image& img, BackgroundTexture texture, Rng& rng) {
  const int n = img.width;
  const auto c0 = random_color(rng, 0.1, 0.5, 0.25, 0.75);
  switch (texture) {
    case BackgroundTexture::Flat:
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = c0[c];
      break;
    case BackgroundTexture::Gradient: {
      const auto c1 = random_color(rng, 0.1, 0.5, 0.25, 0.75);
      const double ang = rng.uniform(0.0, 2.0 * M_PI);
      const double dx = std::cos(ang), dy = std::sin(ang);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double u = ((x + 0.5) / n - 0.5) * dx + ((y + 0.5) / n - 0.5) * dy;
          const double t = std::clamp(u / std::sqrt(2.0) + 0.5, 0.0, 1.0);
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
        }
      break;
    }
    case BackgroundTexture::Noise: {
      // Bilinear value noise on a coarse 5x5 lattice plus fine grain.
      constexpr int grid = 5;
      std::array<double, grid * grid> lattice{};
      for (auto& v : lattice) v = rng.uniform(-0.15, 0.15);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          const double gx = (x + 0.5) / n * (grid - 1), gy = (y + 0.5) / n * (grid - 1);
          const int ix = std::min(static_cast<int>(gx), grid - 2), iy = std::min(static_cast<int>(gy), grid - 2);
          const double ax = gx - ix, ay = gy - iy;
          const double v = lattice[iy * grid + ix] * (1 - ax) * (1 - ay) + lattice[iy * grid + ix + 1] * ax * (1 - ay) +
                           lattice[(iy + 1) * grid + ix] * (1 - ax) * ay + lattice[(iy + 1) * grid + ix + 1] * ax * ay;
          const double grain = rng.uniform(-0.03, 0.03);
          for (int c = 0; c < 3; ++c)
            img.at(x, y, c) = static_cast<float>(std::clamp(c0[c] + v + grain, 0.0, 1.0));
        }
      break;
    }
  }
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  const int n = spec.canvas_size;
  Scene scene;
  scene.image = Image(n, n, 3);
  paint_background(scene.image, spec.background_texture, rng);

  Image occupied(n, n, 1, 0.0f);
  const double canvas_area = static_cast<double>(n) * n;
  for (int obj = 0; obj < spec.num_objects; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const ShapeKind kind =
          spec.shape_vocabulary[rng.uniform_int(0, static_cast<int>(spec.shape_vocabulary.size()) - 1)];
      const double side = std::sqrt(rng.uniform(SceneSpec::kMinAreaFrac, SceneSpec::kMaxAreaFrac) * canvas_area);
      const double r = side / 2.0;
      const double cx = rng.uniform(r, n - r);
      const double cy = rng.uniform(r, n - r);
      Image mask = rasterize(kind, n, cx, cy, r);
      const BBox box = mask_bbox(mask);
      const double frac = box.area() / canvas_area;
      if (frac < SceneSpec::kMinAreaFrac || frac > SceneSpec::kMaxAreaFrac) continue;
      bool overlap = false;
      for (std::size_t i = 0; i < mask.data.size() && !overlap; ++i)
        overlap = mask.data[i] > 0.5f && occupied.data[i] > 0.5f;
      if (overlap) continue;

      const auto color = random_color(rng, 0.55, 1.0, 0.55, 1.0);
      const double shade = rng.uniform(0.15, 0.35);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          if (mask.at(x, y, 0) < 0.5f) continue;
          occupied.at(x, y, 0) = 1.0f;
          // Vertical shading gives each object some internal structure.
          const double t = (y + 0.5 - box.y) / box.h;
          const double k = 1.0 - shade * t;
          for (int c = 0; c < 3; ++c) scene.image.at(x, y, c) = static_cast<float>(color[c] * k);
        }
      scene.masks.push_back(std::move(mask));
      scene.labels.push_back(to_string(kind));
      scene.boxes.push_back(box);
      placed = true;
    }
    if (!placed) {
      throw UnsatisfiableSceneError("cannot place object " + std::to_string(obj + 1) + " of " +
                                    std::to_string(spec.num_objects) + " without overlap after 100 attempts (seed " +
                                    std::to_string(spec.rng_seed) + ")");
    }
  }
  quantize8(scene.image);
  return scene;
}

}  // namespace objcomp::datagen
