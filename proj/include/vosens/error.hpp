#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vosens {

enum class ErrorKind {
  MissingFile,
  NotIndexedPng,
  CorruptImage,
  LabelOverflow,
  IoFailure,
  InconsistentCoverage,
  DimensionMismatch,
  ConfidenceOutOfRange,
  LengthMismatch,
  FrameCountMismatch,
  OutOfRange,
  EmptyInput,
  NegativeConfidence,
  ScoreOutOfRange,
  UnknownModel,
  ConfigInvalid,
  ParseFailure,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::NotIndexedPng: return "NotIndexedPng";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::LabelOverflow: return "LabelOverflow";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InconsistentCoverage: return "InconsistentCoverage";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ConfidenceOutOfRange: return "ConfidenceOutOfRange";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NegativeConfidence: return "NegativeConfidence";
    case ErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::ParseFailure: return "ParseFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vosens
