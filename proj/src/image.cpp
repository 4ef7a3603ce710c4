#include "objcomp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "objcomp/errors.hpp"

namespace objcomp {

bool BBox::contains(const BBox& inner, double tol) const {
  return inner.x >= x - tol && inner.y >= y - tol && inner.right() <= right() + tol &&
         inner.bottom() <= bottom() + tol;
}

float level_to_float(std::uint8_t level) { return static_cast<float>(level) / 255.0f; }

std::uint8_t float_to_level(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void quantize8(Image& img) {
  for (float& v : img.data) v = level_to_float(float_to_level(v));
}

namespace {

png_uint_32 png_format(int channels) {
  switch (channels) {
    case 1:
      return PNG_FORMAT_GRAY;
    case 3:
      return PNG_FORMAT_RGB;
    case 4:
      return PNG_FORMAT_RGBA;
    default:
      throw std::invalid_argument("PNG encoding supports 1, 3 or 4 channels, got " + std::to_string(channels));
  }
}

std::vector<std::uint8_t> to_levels(const Image& img) {
  std::vector<std::uint8_t> levels(img.data.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = float_to_level(img.data[i]);
  return levels;
}

Image finish_read(png_image& image) {
  int channels = 3;
  if (image.format & PNG_FORMAT_FLAG_ALPHA) {
    channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 4 : 2;
  } else {
    channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  }
  if (channels == 2) channels = 4;  // gray+alpha promoted to RGBA
  image.format = channels == 1 ? PNG_FORMAT_GRAY : (channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("PNG decode failed: " + msg);
  }
  Image out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) out.data[i] = level_to_float(buffer[i]);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = png_format(img.channels);
  const auto levels = to_levels(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, levels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, levels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + image.message);
  }
  bytes.resize(size);
  return bytes;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ParseError(std::string("PNG decode failed: ") + image.message);
  }
  return finish_read(image);
}

void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

bool is_png_file(const std::filesystem::path& path) {
  static constexpr unsigned char signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::ifstream in(path, std::ios::binary);
  unsigned char head[8] = {};
  if (!in.read(reinterpret_cast<char*>(head), 8)) return false;
  return std::memcmp(head, signature, 8) == 0;
}

float sample_bilinear(const Image& img, double x, double y, int c) {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(img.width - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double ax = fx - x0, ay = fy - y0;
  const double top = img.at(x0, y0, c) * (1.0 - ax) + img.at(x1, y0, c) * ax;
  const double bot = img.at(x0, y1, c) * (1.0 - ax) + img.at(x1, y1, c) * ax;
  return static_cast<float>(top * (1.0 - ay) + bot * ay);
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (width == img.width && height == img.height) return img;
  Image out(width, height, img.channels);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, (x + 0.5) * sx, (y + 0.5) * sy, c);
  return out;
}

Image resize_nearest(const Image& img, int width, int height) {
  if (width == img.width && height == img.height) return img;
  Image out(width, height, img.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(img.height - 1, static_cast<int>((y + 0.5) * img.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(img.width - 1, static_cast<int>((x + 0.5) * img.width / width));
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

Image crop(const Image& img, int x, int y, int w, int h, float fill) {
  Image out(w, h, img.channels, fill);
  for (int j = 0; j < h; ++j) {
    const int sy = y + j;
    if (sy < 0 || sy >= img.height) continue;
    for (int i = 0; i < w; ++i) {
      const int sx = x + i;
      if (sx < 0 || sx >= img.width) continue;
      for (int c = 0; c < img.channels; ++c) out.at(i, j, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

Image to_rgb(const Image& img, float matte) {
  if (img.channels == 3) return img;
  Image out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, 0);
      } else {
        const float a = img.at(x, y, 3);
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c) * a + matte * (1.0f - a);
      }
    }
  }
  return out;
}

bool pixel_in_box(const BBox& box, int x, int y) {
  const double cx = x + 0.5, cy = y + 0.5;
  return cx >= box.x && cx < box.right() && cy >= box.y && cy < box.bottom();
}

Image hole_mask(int width, int height, const BBox& hole) {
  Image mask(width, height, 1, 1.0f);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (pixel_in_box(hole, x, y)) mask.at(x, y, 0) = 0.0f;
  return mask;
}

}  // namespace objcomp
