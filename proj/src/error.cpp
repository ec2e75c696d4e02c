#include "saplma/error.hpp"

namespace saplma {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::schema: return "schema";
  case ErrorKind::validation: return "validation";
  case ErrorKind::size: return "size";
  case ErrorKind::no_distinct_value: return "no_distinct_value";
  case ErrorKind::bad_magic: return "bad_magic";
  case ErrorKind::version_mismatch: return "version_mismatch";
  case ErrorKind::truncated: return "truncated";
  case ErrorKind::trailing_data: return "trailing_data";
  case ErrorKind::io: return "io";
  case ErrorKind::shape: return "shape";
  case ErrorKind::parameter: return "parameter";
  case ErrorKind::lookup: return "lookup";
  case ErrorKind::protocol: return "protocol";
  case ErrorKind::undefined_metric: return "undefined_metric";
  case ErrorKind::calibration: return "calibration";
  case ErrorKind::data: return "data";
  }
  return "unknown";
}

} // namespace saplma
