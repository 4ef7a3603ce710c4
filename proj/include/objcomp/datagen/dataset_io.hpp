#pragma once

#include <filesystem>
#include <vector>

#include "objcomp/datagen/triplet.hpp"

namespace objcomp::datagen {

/// Directory layout:
///   manifest.jsonl            one JSON record per triplet, in order
///   objects/<id>.png          RGBA
///   backgrounds/<id>.png      RGB
///   masks/<id>.png            8-bit gray (0 or 255)
/// Triplets without an id are named by their index.
void write_dataset(const std::vector<TrainingTriplet>& triplets, const std::filesystem::path& dir);

/// Throws ParseError("manifest.jsonl:<line>: ...") for malformed records.
std::vector<TrainingTriplet> read_dataset(const std::filesystem::path& dir);

struct DatasetSpec {
  int count = 16;
  int canvas_size = 64;
  int max_objects = 2;
  PerturbationSpec perturbation;
  std::uint64_t seed = 0;
};

/// Seeded scenes -> one triplet per scene (object chosen by the seed). Scene
/// texture and object count cycle with the index.
std::vector<TrainingTriplet> generate_triplets(const DatasetSpec& spec);

}  // namespace objcomp::datagen
