#include "objcomp/archive.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "objcomp/errors.hpp"

namespace objcomp {
namespace {

constexpr std::size_t kBlock = 512;

void write_octal(char* field, std::size_t width, std::uint64_t value) {
  // width includes the terminating NUL.
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

std::uint64_t parse_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width && field[i]; ++i) {
    if (field[i] == ' ') continue;
    if (field[i] < '0' || field[i] > '7') throw ParseError("archive: bad octal field");
    v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
  }
  return v;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const std::vector<ArchiveEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open archive for writing: " + path.string());
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() >= 100) throw std::invalid_argument("archive entry name must be 1..99 chars: " + e.name);
    char header[kBlock];
    std::memset(header, 0, kBlock);
    std::memcpy(header, e.name.data(), e.name.size());
    write_octal(header + 100, 8, 0644);
    write_octal(header + 108, 8, 0);
    write_octal(header + 116, 8, 0);
    write_octal(header + 124, 12, e.data.size());
    write_octal(header + 136, 12, 0);
    header[156] = '0';
    std::memcpy(header + 257, "ustar", 6);
    std::memcpy(header + 263, "00", 2);
    std::memset(header + 148, ' ', 8);
    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) sum += static_cast<unsigned char>(header[i]);
    std::snprintf(header + 148, 8, "%06o", sum);
    header[155] = ' ';
    out.write(header, kBlock);
    out.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(e.data.size()));
    const std::size_t pad = (kBlock - e.data.size() % kBlock) % kBlock;
    static const char zeros[kBlock] = {};
    out.write(zeros, static_cast<std::streamsize>(pad));
  }
  static const char zeros[2 * kBlock] = {};
  out.write(zeros, 2 * kBlock);
  if (!out) throw std::runtime_error("archive write failed: " + path.string());
}

std::vector<ArchiveEntry> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive: " + path.string());
  std::vector<ArchiveEntry> entries;
  char header[kBlock];
  while (in.read(header, kBlock)) {
    bool zero = true;
    for (char c : header) zero = zero && c == 0;
    if (zero) break;
    if (std::memcmp(header + 257, "ustar", 5) != 0) throw ParseError("archive: not a ustar header in " + path.string());
    ArchiveEntry e;
    e.name.assign(header, strnlen(header, 100));
    const std::uint64_t size = parse_octal(header + 124, 12);
    e.data.resize(size);
    if (!in.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(size))) {
      throw ParseError("archive: truncated entry " + e.name);
    }
    const std::size_t pad = (kBlock - size % kBlock) % kBlock;
    in.ignore(static_cast<std::streamsize>(pad));
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace objcomp
