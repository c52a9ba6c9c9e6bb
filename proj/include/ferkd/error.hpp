#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ferkd {

enum class ErrorKind {
  parameter,
  empty_input,
  inconsistency,
  shape,
  data,
  state,
  numeric,
  alignment,
  io,
  bad_magic,
  bad_version,
  truncated,
  invariant,
  protocol,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library. `offset()` is set for errors that point
// into a byte stream (store files, frames) and `line()` for text ingestion.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  static Error at_offset(ErrorKind kind, std::size_t offset, const std::string& message) {
    Error e(kind, message + " (at byte " + std::to_string(offset) + ")");
    e.offset_ = offset;
    return e;
  }

  static Error at_line(ErrorKind kind, std::size_t line, const std::string& message) {
    Error e(kind, "line " + std::to_string(line) + ": " + message);
    e.line_ = line;
    return e;
  }

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> offset() const noexcept { return offset_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> offset_;
  std::optional<std::size_t> line_;
};

}  // namespace ferkd
