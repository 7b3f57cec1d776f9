#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace utk {

/// Machine-readable failure category carried by every utk::Error.
enum class ErrorCode {
  // grammar
  SyntaxError,
  UnknownField,
  WrongType,
  // layer store
  IoError,
  FormatError,
  InvariantViolation,
  // ingest
  EmptyRegion,
  MalformedWay,
  UnsupportedGeometry,
  EmptyCollection,
  MissingColumn,
  TooManyCells,
  // geometry
  EmptyTarget,
  UnsupportedKindPair,
  // knot engine
  CountMismatch,
  MissingAggregation,
  TypeError,
  UnresolvedReference,
  GeocoderUnavailable,
  UnboundIdentifier,
  ExprSyntaxError,
  LevelUnavailable,
  NoSamplesInBand,
  ObjectNotFound,
  // shadow
  EmptyScene,
  EmptyPath,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message, std::string path = {})
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code), detail_(message), path_(std::move(path)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  /// JSON pointer into the offending document, when there is one.
  const std::string& path() const noexcept { return path_; }

private:
  ErrorCode code_;
  std::string detail_;
  std::string path_;
};

/// Expression syntax failure; offset is the 0-based character position.
class ExprSyntaxError : public Error {
public:
  ExprSyntaxError(std::size_t offset, const std::string& message)
    : Error(ErrorCode::ExprSyntaxError,
            message + " at offset " + std::to_string(offset)),
      offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// Collects non-fatal warnings emitted by ingest, load and evaluation.
class WarningLog {
public:
  void add(std::string message) { messages_.push_back(std::move(message)); }
  const std::vector<std::string>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }

private:
  std::vector<std::string> messages_;
};

inline void warn(WarningLog* log, std::string message) {
  if (log) log->add(std::move(message));
}

}  // namespace utk
