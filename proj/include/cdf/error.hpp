#pragma once

#include <stdexcept>
#include <string>

namespace cdf {

enum class ErrorCode {
  InvalidInput,
  DimensionMismatch,
  NumericOverflow,
  Unsupported,
  Precondition,
  InsufficientHistory,
  Infeasible,
  CertificationFailure,
  Config,
  Parse,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "invalid input";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::NumericOverflow: return "numeric overflow";
    case ErrorCode::Unsupported: return "unsupported operation";
    case ErrorCode::Precondition: return "precondition violated";
    case ErrorCode::InsufficientHistory: return "insufficient history";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::CertificationFailure: return "certification failure";
    case ErrorCode::Config: return "config error";
    case ErrorCode::Parse: return "parse error";
  }
  return "unknown error";
}

/// Library-wide exception. The code identifies the failure class; the
/// message carries the detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cdf
