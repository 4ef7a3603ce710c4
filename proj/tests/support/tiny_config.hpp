#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "objcomp/pipeline/config.hpp"

namespace objcomp::testing {

/// Desk shapes at a 32 px canvas with a handful of steps per stage.
inline pipeline::RunConfig tiny_config(const std::filesystem::path& out) {
  auto c = pipeline::RunConfig::desk();
  c.output_dir = out;
  c.dataset.count = 6;
  c.dataset.canvas_size = 32;
  c.dataset.max_objects = 1;
  c.stage1_pairs = 6;
  c.unet.image_size = 32;
  c.unet.base_channels = 8;
  c.unet.groups = 4;
  c.unet.attention_resolutions = {16};
  for (auto& [name, s] : c.stages) {
    s.steps = 3;
    s.batch_size = 2;
    s.warmup_steps = 0;
  }
  c.diffusion.sample_steps = 4;
  c.diffusion.eval_sample_steps = 3;
  c.eval.count = 4;
  c.eval.stress_count = 4;
  c.eval.batch = 2;
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("objcomp-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace objcomp::testing
