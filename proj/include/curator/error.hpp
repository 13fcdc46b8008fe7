#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace curator {

enum class ErrorCode {
  UnknownAnswerString,
  UnparsedTrace,
  EmptyLogProbs,
  PositiveLogProb,
  InvalidLogProb,
  NoSamples,
  MissingLogProbs,
  MissingScore,
  MissingGoldLabel,
  ServiceUnavailable,
  ProtocolError,
  EndpointError,
  EmptyDataset,
  EmptyEvalSet,
  TooFewExamples,
  InvalidConfig,
  InvalidArgument,
  ParseError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownAnswerString: return "UnknownAnswerString";
    case ErrorCode::UnparsedTrace: return "UnparsedTrace";
    case ErrorCode::EmptyLogProbs: return "EmptyLogProbs";
    case ErrorCode::PositiveLogProb: return "PositiveLogProb";
    case ErrorCode::InvalidLogProb: return "InvalidLogProb";
    case ErrorCode::NoSamples: return "NoSamples";
    case ErrorCode::MissingLogProbs: return "MissingLogProbs";
    case ErrorCode::MissingScore: return "MissingScore";
    case ErrorCode::MissingGoldLabel: return "MissingGoldLabel";
    case ErrorCode::ServiceUnavailable: return "ServiceUnavailable";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace curator
