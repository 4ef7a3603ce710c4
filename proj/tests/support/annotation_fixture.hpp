#pragma once

#include <algorithm>
#include <cstdint>

#include "objcomp/image.hpp"
#include "tiny_config.hpp"

namespace objcomp::testing {

inline Image gradient_background(int w, int h) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = level_to_float(static_cast<std::uint8_t>((x * 7) % 256));
      img.at(x, y, 1) = level_to_float(static_cast<std::uint8_t>((y * 5) % 256));
      img.at(x, y, 2) = level_to_float(static_cast<std::uint8_t>((x + y) % 256));
    }
  return img;
}

/// RGBA with a soft alpha ramp.
inline Image ramp_object(int w, int h) {
  Image img(w, h, 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = level_to_float(200);
      img.at(x, y, 1) = level_to_float(static_cast<std::uint8_t>(10 * x));
      img.at(x, y, 2) = level_to_float(static_cast<std::uint8_t>(17 * y));
      img.at(x, y, 3) = level_to_float(static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1)));
    }
  return img;
}

struct AssetFixture {
  TempDir dir{"assets"};
  AssetFixture() {
    std::filesystem::create_directories(dir / "objects");
    std::filesystem::create_directories(dir / "backgrounds");
    write_png(dir / "objects/b_star.png", ramp_object(8, 6));
    write_png(dir / "objects/a_disc.png", ramp_object(10, 10));
    write_png(dir / "backgrounds/room.png", gradient_background(40, 30));
    objcomp::testing::write_text(dir / "objects/notes.txt", "not an image");
  }
  std::filesystem::path root() const { return dir.path(); }
};

/// 8-bit integer alpha blend, rounded to nearest.
inline std::uint8_t blend8(int a, int src, int bg) {
  return static_cast<std::uint8_t>((a * src + (255 - a) * bg + 127) / 255);
}

}  // namespace objcomp::testing
