#pragma once

#include <stdexcept>
#include <string>

namespace liveval {

enum class ErrorKind {
  dimension,
  numeric,
  parameter,
  schema,
  parse,
  format,
  consistency,
  store,
  solver,
  io,
  config,
  internal,
};

const char *to_string(ErrorKind kind) noexcept;

// Single exception type for the library; the kind drives the C API status
// code and the CLI exit code.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string &what) {
  if (!cond)
    throw Error(kind, what);
}

} // namespace liveval
