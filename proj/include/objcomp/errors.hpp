#pragma once

#include <stdexcept>
#include <string>

namespace objcomp {

/// Invalid configuration values (bad sizes, inconsistent dimensions).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape did not match what an operation expects.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A geometric input is degenerate (e.g. collinear correspondences).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A transform or operation produced an empty result.
class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training stage was requested before its upstream checkpoint exists.
class OrderingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure in a persisted file; carries the offending line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0)
      : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Training diverged (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace objcomp
