#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmf {

/// Input violates an operation precondition (NaN coordinate, non-positive size, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shapes, grids or dimensions of cooperating objects disagree.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content. Carries the byte offset or the 1-based line number
/// of the first offending record.
class ParseError : public std::runtime_error {
 public:
  enum class Unit { kByte, kLine, kNone };

  ParseError(std::string source, Unit unit, std::uint64_t position, const std::string& what)
      : std::runtime_error(Format(source, unit, position, what)),
        source_(std::move(source)),
        unit_(unit),
        position_(position) {}

  const std::string& source() const { return source_; }
  Unit unit() const { return unit_; }
  std::uint64_t position() const { return position_; }

 private:
  static std::string Format(const std::string& source, Unit unit, std::uint64_t position,
                            const std::string& what) {
    std::string msg = source;
    if (unit == Unit::kByte) {
      msg += " @byte " + std::to_string(position);
    } else if (unit == Unit::kLine) {
      msg += ":" + std::to_string(position);
    }
    return msg + ": " + what;
  }

  std::string source_;
  Unit unit_;
  std::uint64_t position_;
};

/// Filesystem failure (missing file, unwritable directory).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A generator could not satisfy its specification (e.g. box placement retries exhausted).
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmf
