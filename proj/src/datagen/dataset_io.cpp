#include "objcomp/datagen/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "objcomp/errors.hpp"

namespace objcomp::datagen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "t%06zu", index);
  return buf;
}

}  // namespace

void write_dataset(const std::vector<TrainingTriplet>& triplets, const fs::path& dir) {
  fs::create_directories(dir / "objects");
  fs::create_directories(dir / "backgrounds");
  fs::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    const std::string id = t.id.empty() ? default_id(i) : t.id;
    const std::string obj = "objects/" + id + ".png";
    const std::string bg = "backgrounds/" + id + ".png";
    const std::string mask = "masks/" + id + ".png";
    write_png(dir / obj, t.object_image);
    write_png(dir / bg, t.background_image);
    write_png(dir / mask, t.mask);
    json rec = {{"index", i},         {"id", id},       {"caption", t.caption},
                {"bbox", {t.bbox.x, t.bbox.y, t.bbox.w, t.bbox.h}},
                {"object", obj},       {"background", bg}, {"mask", mask}};
    manifest << rec.dump() << '\n';
  }
  if (!manifest) throw std::runtime_error("manifest write failed in " + dir.string());
}

std::vector<TrainingTriplet> read_dataset(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot open " + (dir / "manifest.jsonl").string());
  std::vector<TrainingTriplet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      TrainingTriplet t;
      t.id = rec.at("id").get<std::string>();
      t.caption = rec.at("caption").get<std::string>();
      const auto& b = rec.at("bbox");
      if (!b.is_array() || b.size() != 4) throw ParseError("bbox must be four numbers");
      t.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      t.object_image = read_png(dir / rec.at("object").get<std::string>());
      t.background_image = read_png(dir / rec.at("background").get<std::string>());
      t.mask = read_png(dir / rec.at("mask").get<std::string>());
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw ParseError("manifest.jsonl:" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return out;
}

std::vector<TrainingTriplet> generate_triplets(const DatasetSpec& spec) {
  std::vector<TrainingTriplet> out;
  out.reserve(spec.count);
  static constexpr BackgroundTexture textures[] = {BackgroundTexture::Flat, BackgroundTexture::Gradient,
                                                   BackgroundTexture::Noise};
  std::uint64_t attempt = 0;
  while (static_cast<int>(out.size()) < spec.count) {
    const std::size_t index = out.size();
    SceneSpec scene_spec;
    scene_spec.canvas_size = spec.canvas_size;
    scene_spec.num_objects = 1 + static_cast<int>((index + attempt) % std::max(spec.max_objects, 1));
    scene_spec.background_texture = textures[index % 3];
    scene_spec.rng_seed = Rng::derive(spec.seed, 2 * (index + 1000003 * attempt));
    Scene scene;
    try {
      scene = generate_scene(scene_spec);
    } catch (const UnsatisfiableSceneError&) {
      ++attempt;
      continue;
    }
    PerturbationSpec pert = spec.perturbation;
    pert.rng_seed = Rng::derive(spec.seed, 2 * (index + 1000003 * attempt) + 1);
    Rng pick(pert.rng_seed);
    const int object_index = pick.uniform_int(0, static_cast<int>(scene.masks.size()) - 1);
    TrainingTriplet t;
    try {
      t = make_training_triplet(scene, object_index, pert);
    } catch (const EmptyResultError&) {
      ++attempt;
      continue;
    }
    t.id = default_id(index);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace objcomp::datagen
