#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace admsim {

enum class ErrorCode {
  DegenerateFrame,
  NotOrthonormal,
  SingularMap,
  NoConvergence,
  JointLimitViolation,
  PassivityViolation,
  GoalUnreachable,
  NoPathFound,
  TooFewMatches,
  PointAtInfinity,
  DegenerateConfiguration,
  ConsensusFailed,
  NoDepth,
  PlaneBehindCamera,
  PlanFailure,
  NumericalDivergence,
  VersionError,
  ParseError,
  ConfigError,
  InvalidArgument,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::NotOrthonormal: return "NotOrthonormal";
    case ErrorCode::SingularMap: return "SingularMap";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::JointLimitViolation: return "JointLimitViolation";
    case ErrorCode::PassivityViolation: return "PassivityViolation";
    case ErrorCode::GoalUnreachable: return "GoalUnreachable";
    case ErrorCode::NoPathFound: return "NoPathFound";
    case ErrorCode::TooFewMatches: return "TooFewMatches";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::ConsensusFailed: return "ConsensusFailed";
    case ErrorCode::NoDepth: return "NoDepth";
    case ErrorCode::PlaneBehindCamera: return "PlaneBehindCamera";
    case ErrorCode::PlanFailure: return "PlanFailure";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::VersionError: return "VersionError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// contract was violated so the CLI can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace admsim
