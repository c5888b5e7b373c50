#include "dragfield/errors.hpp"

namespace dragfield {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyEditableRegion: return "EmptyEditableRegion";
    case ErrorKind::HandleOutsideCircle: return "HandleOutsideCircle";
    case ErrorKind::PointOutsideCircle: return "PointOutsideCircle";
    case ErrorKind::NoInstructions: return "NoInstructions";
    case ErrorKind::HandleNotEditable: return "HandleNotEditable";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::BadHeadDim: return "BadHeadDim";
    case ErrorKind::CacheMiss: return "CacheMiss";
    case ErrorKind::NotEditRegion: return "NotEditRegion";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::CacheMismatch: return "CacheMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::CorruptTensor: return "CorruptTensor";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::LimitExceeded: return "LimitExceeded";
  }
  return "Unknown";
}

bool is_geometry_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyEditableRegion:
    case ErrorKind::HandleOutsideCircle:
    case ErrorKind::PointOutsideCircle:
    case ErrorKind::NoInstructions:
    case ErrorKind::HandleNotEditable:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

ParseError::ParseError(std::string pointer, const std::string& detail)
    : Error(ErrorKind::ParseError, (pointer.empty() ? std::string("/") : pointer) + ": " + detail),
      pointer_(std::move(pointer)) {}

}  // namespace dragfield
