#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "objcomp/nn/layers.hpp"

namespace objcomp {

namespace stage_tag {
inline constexpr const char* kGeneratorBase = "generator.base";
inline constexpr const char* kAdaptorStage1 = "adaptor.stage1";
inline constexpr const char* kAdaptorStage2 = "adaptor.stage2";
inline constexpr const char* kGeneratorStage3 = "generator.stage3";
}  // namespace stage_tag

struct CheckpointMeta {
  std::string stage;
  long step = 0;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
};

/// Archive layout: `meta.json` plus one `weights/<name>.emb` blob per
/// parameter, each in the EMB1 layout ([1, rows, cols] with the leading
/// dimension as rows; full shapes live in meta.json).
struct Checkpoint {
  CheckpointMeta meta;
  std::map<std::string, nn::Tensor<float>> weights;
  /// Stage tag plus a hash of the weights, e.g. "adaptor.stage1:1f2e...".
  std::string id;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const nn::ParamSet<T>& params);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint weights into `params`; names and shapes must match exactly.
template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, nn::ParamSet<T>& params);

std::string checkpoint_id(const std::string& stage, std::uint64_t checksum);

}  // namespace objcomp
