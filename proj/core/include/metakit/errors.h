#pragma once

#include <stdexcept>
#include <string>

namespace metakit {

// Error taxonomy maps onto CLI exit codes: schema/config -> 2,
// computation -> 3, convergence -> 4.
struct MetakitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : MetakitError {
  using MetakitError::MetakitError;
};

struct ParseError : SchemaError {
  ParseError(const std::string& msg, long line)
      : SchemaError(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

struct ComputeError : MetakitError {
  using MetakitError::MetakitError;
};

struct ConvergenceError : MetakitError {
  using MetakitError::MetakitError;
};

}  // namespace metakit
