#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace taste {

enum class ErrorCode {
  // prompt
  EmptySource,
  EmptyPair,
  UnknownLanguage,
  EmptyDraft,
  KindMismatch,
  MissingQualityToken,
  UnknownLabel,
  MalformedScore,
  ScoreOutOfRange,
  EmptyOutput,
  // corpus / dataset
  MalformedLine,
  EmptyField,
  EmptyInput,
  OutOfRange,
  InsufficientPool,
  IoError,
  // backend
  Timeout,
  TransportError,
  BadStatus,
  BadResponse,
  NoRuleMatched,
  // scorer
  ScorerUnavailable,
  // pipeline
  Stage1ParseError,
  Stage2Error,
  BackendUnavailable,
  LengthMismatch,
  InvalidOverride,
  // metrics
  EmptyCorpus,
  EmptyMatrix,
  ConstantVector,
  IndexOutOfRange,
  // general
  InvalidArgument,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::EmptySource: return "EmptySource";
  case ErrorCode::EmptyPair: return "EmptyPair";
  case ErrorCode::UnknownLanguage: return "UnknownLanguage";
  case ErrorCode::EmptyDraft: return "EmptyDraft";
  case ErrorCode::KindMismatch: return "KindMismatch";
  case ErrorCode::MissingQualityToken: return "MissingQualityToken";
  case ErrorCode::UnknownLabel: return "UnknownLabel";
  case ErrorCode::MalformedScore: return "MalformedScore";
  case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
  case ErrorCode::EmptyOutput: return "EmptyOutput";
  case ErrorCode::MalformedLine: return "MalformedLine";
  case ErrorCode::EmptyField: return "EmptyField";
  case ErrorCode::EmptyInput: return "EmptyInput";
  case ErrorCode::OutOfRange: return "OutOfRange";
  case ErrorCode::InsufficientPool: return "InsufficientPool";
  case ErrorCode::IoError: return "IoError";
  case ErrorCode::Timeout: return "Timeout";
  case ErrorCode::TransportError: return "TransportError";
  case ErrorCode::BadStatus: return "BadStatus";
  case ErrorCode::BadResponse: return "BadResponse";
  case ErrorCode::NoRuleMatched: return "NoRuleMatched";
  case ErrorCode::ScorerUnavailable: return "ScorerUnavailable";
  case ErrorCode::Stage1ParseError: return "Stage1ParseError";
  case ErrorCode::Stage2Error: return "Stage2Error";
  case ErrorCode::BackendUnavailable: return "BackendUnavailable";
  case ErrorCode::LengthMismatch: return "LengthMismatch";
  case ErrorCode::InvalidOverride: return "InvalidOverride";
  case ErrorCode::EmptyCorpus: return "EmptyCorpus";
  case ErrorCode::EmptyMatrix: return "EmptyMatrix";
  case ErrorCode::ConstantVector: return "ConstantVector";
  case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

inline std::optional<ErrorCode> error_code_from_string(std::string_view name) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::ConfigError); ++c)
    if (to_string(static_cast<ErrorCode>(c)) == name)
      return static_cast<ErrorCode>(c);
  return std::nullopt;
}

/// Every failure in the toolkit is reported as a taste::Error carrying an
/// ErrorCode. Batch operations store errors in-slot (see Outcome) instead of
/// throwing, so one bad item never aborts its neighbours.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // 1-based input line, when the error came from a line-oriented file.
  std::optional<std::size_t> line() const noexcept { return line_; }
  Error &with_line(std::size_t line) {
    line_ = line;
    return *this;
  }

  // HTTP status for BadStatus.
  int http_status() const noexcept { return http_status_; }
  Error &with_status(int status) {
    http_status_ = status;
    return *this;
  }

  // Requests made before giving up (backend errors only).
  int attempts() const noexcept { return attempts_; }
  Error &with_attempts(int attempts) {
    attempts_ = attempts;
    return *this;
  }

private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
  int http_status_ = 0;
  int attempts_ = 0;
};

/// Value-or-error slot used for per-item results in batch operations.
template <typename T> class Outcome {
public:
  Outcome(T value) : state_(std::move(value)) {}
  Outcome(Error error) : state_(std::move(error)) {}

  bool ok() const noexcept { return std::holds_alternative<T>(state_); }
  explicit operator bool() const noexcept { return ok(); }

  const T &value() const {
    if (!ok())
      throw std::get<Error>(state_);
    return std::get<T>(state_);
  }
  T &value() {
    if (!ok())
      throw std::get<Error>(state_);
    return std::get<T>(state_);
  }
  const Error &error() const { return std::get<Error>(state_); }

private:
  std::variant<T, Error> state_;
};

} // namespace taste
