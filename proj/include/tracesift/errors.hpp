#pragma once

#include <stdexcept>
#include <string>

namespace tracesift {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed textual input (JSON, XML, model files). Carries a line number
// when the underlying reader can supply one; line 0 means "unknown".
struct ParseError : Error {
  int line = 0;
  explicit ParseError(const std::string& msg, int line_no = 0)
      : Error(line_no > 0 ? msg + " (line " + std::to_string(line_no) + ")" : msg),
        line(line_no) {}
};

// Structurally valid input that violates a schema rule (duplicate ids,
// empty sequence sets, unknown kinds, ...).
struct SchemaError : Error {
  using Error::Error;
};

// Event-log content errors; message names the offending trace/event index.
struct FormatError : Error {
  using Error::Error;
};

// API misuse: preconditions violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Enumeration or search exceeded its configured budget.
struct ResourceError : Error {
  using Error::Error;
};

// A net whose playout admits no visible firing sequence.
struct EmptyLanguageError : Error {
  using Error::Error;
};

// Stored artifact fails its own internal consistency checks.
struct IntegrityError : Error {
  using Error::Error;
};

// Binary knowledge-base file problems, split out so callers can tell a
// stale format apart from a damaged file.
struct VersionError : IntegrityError {
  using IntegrityError::IntegrityError;
};
struct ChecksumError : IntegrityError {
  using IntegrityError::IntegrityError;
};

// Cosine against a zero-length vector has no defined value.
struct ZeroNormError : Error {
  using Error::Error;
};

// Generation backend transport failure (network, missing scripted reply).
struct BackendError : Error {
  using Error::Error;
};

}  // namespace tracesift
