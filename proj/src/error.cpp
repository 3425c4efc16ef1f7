#include "liveval/error.hpp"

namespace liveval {

const char *to_string(ErrorKind kind) noexcept {
  switch (kind) {
  case ErrorKind::dimension: return "dimension";
  case ErrorKind::numeric: return "numeric";
  case ErrorKind::parameter: return "parameter";
  case ErrorKind::schema: return "schema";
  case ErrorKind::parse: return "parse";
  case ErrorKind::format: return "format";
  case ErrorKind::consistency: return "consistency";
  case ErrorKind::store: return "store";
  case ErrorKind::solver: return "solver";
  case ErrorKind::io: return "io";
  case ErrorKind::config: return "config";
  case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

} // namespace liveval
