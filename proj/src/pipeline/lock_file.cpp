#include "objcomp/pipeline/lock_file.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

namespace objcomp::pipeline {

LockFile::LockFile(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw LockError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
    }
    throw LockError("cannot create " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  if (::write(fd, pid.data(), pid.size()) < 0) {
    ::close(fd);
    throw LockError("cannot write " + path_.string());
  }
  ::close(fd);
}

LockFile::~LockFile() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace objcomp::pipeline
