#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "objcomp/nn/tensor.hpp"

namespace objcomp {

// "EMB1" file: magic, then u32 LE batch k, length L, dim d, then k*L*d
// f32 LE values in row-major order.

std::vector<std::uint8_t> encode_embeddings(const nn::Tensor<float>& batch);
/// Returns a [k, L, d] tensor. Throws ParseError on bad magic or size.
nn::Tensor<float> decode_embeddings(const std::vector<std::uint8_t>& bytes);

void write_embeddings(const std::filesystem::path& path, const nn::Tensor<float>& batch);
nn::Tensor<float> read_embeddings(const std::filesystem::path& path);

}  // namespace objcomp
