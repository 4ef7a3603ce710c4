#pragma once

#include <filesystem>
#include <stdexcept>

namespace objcomp::pipeline {

class LockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exclusive `<dir>/.lock` held for the object's lifetime. Throws LockError
/// when another process holds it.
class LockFile {
 public:
  explicit LockFile(const std::filesystem::path& dir);
  ~LockFile();
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace objcomp::pipeline
