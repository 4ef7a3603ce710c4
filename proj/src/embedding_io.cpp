#include "objcomp/embedding_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "objcomp/errors.hpp"

namespace objcomp {
namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_embeddings(const nn::Tensor<float>& batch) {
  if (batch.rank() != 3) throw ShapeError("embedding file needs a [k, L, d] tensor, got " + nn::shape_string(batch.shape()));
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(16 + batch.numel() * 4);
  for (int i = 0; i < 3; ++i) put_u32(out, static_cast<std::uint32_t>(batch.dim(i)));
  for (float v : batch.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

nn::Tensor<float> decode_embeddings(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("embedding file: missing EMB1 header");
  }
  const std::uint32_t k = get_u32(bytes.data() + 4);
  const std::uint32_t len = get_u32(bytes.data() + 8);
  const std::uint32_t dim = get_u32(bytes.data() + 12);
  const std::uint64_t count = static_cast<std::uint64_t>(k) * len * dim;
  if (bytes.size() != 16 + count * 4) {
    throw ParseError("embedding file: payload size " + std::to_string(bytes.size() - 16) + " does not match header " +
                     std::to_string(k) + "x" + std::to_string(len) + "x" + std::to_string(dim));
  }
  nn::Tensor<float> out({static_cast<int>(k), static_cast<int>(len), static_cast<int>(dim)});
  for (std::uint64_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
  return out;
}

void write_embeddings(const std::filesystem::path& path, const nn::Tensor<float>& batch) {
  const auto bytes = encode_embeddings(batch);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

nn::Tensor<float> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes);
}

}  // namespace objcomp
