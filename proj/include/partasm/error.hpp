#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace partasm {

// Base error. `kind()` is a stable, machine-parsable class name used by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape_error", message) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& message) : Error("degenerate_input", message) {}
};

class DegenerateGeometryError : public Error {
 public:
  DegenerateGeometryError(const std::string& message, int rank)
      : Error("degenerate_geometry", message), rank_(rank) {}

  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("invalid_argument", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("non_finite", message) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset)
      : Error("parse_error", message + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class VersionError : public Error {
 public:
  VersionError(int expected, int found)
      : Error("version_mismatch", "unsupported format version " + std::to_string(found) +
                                      " (this build reads version " + std::to_string(expected) + ")"),
        expected_(expected),
        found_(found) {}

  int expected() const noexcept { return expected_; }
  int found() const noexcept { return found_; }

 private:
  int expected_;
  int found_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_mismatch", message) {}
};

}  // namespace partasm
