#pragma once

#include <cstdint>
#include <source_location>
#include <stdexcept>
#include <string>

namespace minigcn {

/// Source position of the throw site, captured through a defaulted argument.
class Located {
public:
  explicit Located(std::source_location loc) : loc_(loc) {}
  const std::source_location& location() const noexcept { return loc_; }

private:
  std::source_location loc_;
};

/// Violated precondition or invariant of a public operation.
class ContractError : public std::logic_error, public Located {
public:
  explicit ContractError(const std::string& what, std::source_location loc = std::source_location::current())
      : std::logic_error(what), Located(loc) {}
};

/// Operand shapes that cannot be combined.
class ShapeError : public ContractError {
public:
  using ContractError::ContractError;
};

/// Invalid configuration (unknown tags, inconsistent dimensions).
class ConfigError : public ContractError {
public:
  using ContractError::ContractError;
};

/// Iterative numerics that failed to converge, or non-finite values.
class NumericError : public std::runtime_error, public Located {
public:
  explicit NumericError(const std::string& what, std::source_location loc = std::source_location::current())
      : std::runtime_error(what), Located(loc) {}
};

/// Filesystem failures (missing files, unwritable outputs).
class IoError : public std::runtime_error, public Located {
public:
  explicit IoError(const std::string& what, std::source_location loc = std::source_location::current())
      : std::runtime_error(what), Located(loc) {}
};

/// Malformed file contents. Carries the byte offset where parsing stopped.
class FormatError : public IoError {
public:
  FormatError(const std::string& what, std::uint64_t offset,
              std::source_location loc = std::source_location::current())
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")", loc), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

}  // namespace minigcn
