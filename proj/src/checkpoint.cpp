#include "objcomp/checkpoint.hpp"

#include <cstdio>

#include "objcomp/archive.hpp"
#include "objcomp/embedding_io.hpp"
#include "objcomp/errors.hpp"

namespace objcomp {

std::string checkpoint_id(const std::string& stage, std::uint64_t checksum) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(checksum));
  return stage + ":" + hex;
}

namespace {

std::uint64_t float_checksum(const std::map<std::string, nn::Tensor<float>>& weights,
                             const std::vector<std::string>& order) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& name : order) {
    const auto& t = weights.at(name);
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.numel() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const nn::ParamSet<T>& params) {
  nlohmann::json doc;
  doc["stage"] = meta.stage;
  doc["step"] = meta.step;
  doc["seed"] = meta.seed;
  doc["config"] = meta.config;
  doc["tensors"] = nlohmann::json::array();

  std::vector<ArchiveEntry> entries;
  entries.push_back({"meta.json", {}});
  std::map<std::string, nn::Tensor<float>> as_float;
  std::vector<std::string> order;
  for (const auto& [name, var] : params.entries()) {
    nn::Tensor<float> t = var->value.template cast<float>();
    const int rows = t.rank() > 0 ? t.dim(0) : 1;
    const int cols = static_cast<int>(t.numel() / std::max(rows, 1));
    entries.push_back({"weights/" + name + ".emb", encode_embeddings(t.reshaped({1, rows, cols}))});
    doc["tensors"].push_back({{"name", name}, {"shape", var->shape()}});
    order.push_back(name);
    as_float.emplace(name, std::move(t));
  }
  doc["id"] = checkpoint_id(meta.stage, float_checksum(as_float, order));
  const std::string text = doc.dump(2);
  entries[0].data.assign(text.begin(), text.end());
  write_archive(path, entries);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto entries = read_archive(path);
  if (entries.empty() || entries[0].name != "meta.json") {
    throw ParseError("checkpoint " + path.string() + ": missing meta.json");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(entries[0].data.begin(), entries[0].data.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": bad meta.json: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta.stage = doc.at("stage").get<std::string>();
  ckpt.meta.step = doc.at("step").get<long>();
  ckpt.meta.seed = doc.at("seed").get<std::uint64_t>();
  ckpt.meta.config = doc.value("config", nlohmann::json::object());
  ckpt.id = doc.value("id", std::string());

  std::map<std::string, const ArchiveEntry*> blobs;
  for (const auto& e : entries) blobs[e.name] = &e;
  for (const auto& t : doc.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<nn::Shape>();
    auto it = blobs.find("weights/" + name + ".emb");
    if (it == blobs.end()) throw ParseError("checkpoint " + path.string() + ": missing blob for " + name);
    ckpt.weights.emplace(name, decode_embeddings(it->second->data).reshaped(shape));
  }
  return ckpt;
}

template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, nn::ParamSet<T>& params) {
  if (ckpt.weights.size() != params.entries().size()) {
    throw ShapeError("checkpoint " + ckpt.meta.stage + " has " + std::to_string(ckpt.weights.size()) +
                     " tensors, model expects " + std::to_string(params.entries().size()));
  }
  for (const auto& [name, var] : params.entries()) {
    auto it = ckpt.weights.find(name);
    if (it == ckpt.weights.end()) throw ShapeError("checkpoint " + ckpt.meta.stage + " lacks parameter " + name);
    nn::check_shape(it->second.shape(), var->shape(), "checkpoint parameter " + name);
    var->value = it->second.template cast<T>();
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const CheckpointMeta&, const nn::ParamSet<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const CheckpointMeta&, const nn::ParamSet<double>&);
template void apply_checkpoint<float>(const Checkpoint&, nn::ParamSet<float>&);
template void apply_checkpoint<double>(const Checkpoint&, nn::ParamSet<double>&);

}  // namespace objcomp
