#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dragfield {

enum class ErrorKind {
  // geometry
  EmptyEditableRegion,
  HandleOutsideCircle,
  PointOutsideCircle,
  NoInstructions,
  HandleNotEditable,
  InvalidGrid,
  // correspondence
  ShapeMismatch,
  // attention control / toy model
  BadHeadDim,
  CacheMiss,
  NotEditRegion,
  BadConfig,
  CacheMismatch,
  // io
  ParseError,
  CorruptTensor,
  IoError,
  // request guards
  LimitExceeded,
};

std::string_view to_string(ErrorKind kind);

/// Errors that the CLI maps to exit code 3 and the server to HTTP 422.
bool is_geometry_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Schema violation, located by a JSON pointer into the offending document.
class ParseError : public Error {
 public:
  ParseError(std::string pointer, const std::string& detail);

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace dragfield
