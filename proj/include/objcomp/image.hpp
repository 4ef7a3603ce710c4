#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace objcomp {

/// Axis-aligned box in pixel units; origin top-left, x right, y down.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool contains(const BBox& inner, double tol = 1e-9) const;
  bool operator==(const BBox&) const = default;
};

/// Interleaved float image, values nominally in [0, 1]. 1, 3 or 4 channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

/// 8-bit level k maps to exactly k / 255.0f.
float level_to_float(std::uint8_t level);
std::uint8_t float_to_level(float v);
/// Snaps every value onto the 8-bit grid (clamped to [0, 1]).
void quantize8(Image& img);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);
/// True when the file starts with the PNG signature.
bool is_png_file(const std::filesystem::path& path);

/// Bilinear sample at continuous coordinates (pixel centres at i + 0.5), edge-clamped.
float sample_bilinear(const Image& img, double x, double y, int c);
Image resize_bilinear(const Image& img, int width, int height);
Image resize_nearest(const Image& img, int width, int height);
/// Integer crop; regions outside the source are filled with `fill`.
Image crop(const Image& img, int x, int y, int w, int h, float fill = 0.0f);
/// Drops or appends an alpha channel.
Image to_rgb(const Image& img, float matte = 0.0f);

/// Pixels whose centre lies inside `box`.
bool pixel_in_box(const BBox& box, int x, int y);
/// Single-channel mask: 0 for pixels inside `hole`, 1 elsewhere.
Image hole_mask(int width, int height, const BBox& hole);

}  // namespace objcomp
