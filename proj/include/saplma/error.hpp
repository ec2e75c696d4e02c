#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saplma {

enum class ErrorKind {
  schema,           // missing / malformed column or field
  validation,       // invariant violated by input content
  size,             // too few rows / items
  no_distinct_value,
  bad_magic,
  version_mismatch,
  truncated,
  trailing_data,
  io,
  shape,
  parameter,
  lookup,
  protocol,
  undefined_metric,
  calibration,
  data,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

} // namespace saplma
