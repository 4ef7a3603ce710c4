#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace objcomp {

struct ArchiveEntry {
  std::string name;
  std::vector<std::uint8_t> data;
};

/// Writes a POSIX ustar archive. Header timestamps are zero so identical
/// entries always produce identical bytes.
void write_archive(const std::filesystem::path& path, const std::vector<ArchiveEntry>& entries);
std::vector<ArchiveEntry> read_archive(const std::filesystem::path& path);

}  // namespace objcomp
