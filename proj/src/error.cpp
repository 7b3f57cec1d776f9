#include "utk/error.hpp"

namespace utk {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownField: return "UnknownField";
    case ErrorCode::WrongType: return "WrongType";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::MalformedWay: return "MalformedWay";
    case ErrorCode::UnsupportedGeometry: return "UnsupportedGeometry";
    case ErrorCode::EmptyCollection: return "EmptyCollection";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::TooManyCells: return "TooManyCells";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::UnsupportedKindPair: return "UnsupportedKindPair";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::MissingAggregation: return "MissingAggregation";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::UnresolvedReference: return "UnresolvedReference";
    case ErrorCode::GeocoderUnavailable: return "GeocoderUnavailable";
    case ErrorCode::UnboundIdentifier: return "UnboundIdentifier";
    case ErrorCode::ExprSyntaxError: return "ExprSyntaxError";
    case ErrorCode::LevelUnavailable: return "LevelUnavailable";
    case ErrorCode::NoSamplesInBand: return "NoSamplesInBand";
    case ErrorCode::ObjectNotFound: return "ObjectNotFound";
    case ErrorCode::EmptyScene: return "EmptyScene";
    case ErrorCode::EmptyPath: return "EmptyPath";
  }
  return "Unknown";
}

}  // namespace utk
