#include "biref/errors.hpp"

namespace biref {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonPositiveKernel: return "NonPositiveKernel";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kInfeasibleEll: return "InfeasibleEll";
    case ErrorCode::kNoFeasibleEll: return "NoFeasibleEll";
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kZeroMass: return "ZeroMass";
    case ErrorCode::kMassMismatch: return "MassMismatch";
    case ErrorCode::kUnbalanced: return "Unbalanced";
    case ErrorCode::kStalled: return "Stalled";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kUnequalWeights: return "UnequalWeights";
    case ErrorCode::kNotTight: return "NotTight";
    case ErrorCode::kInfeasiblePotentials: return "InfeasiblePotentials";
    case ErrorCode::kNotSupporting: return "NotSupporting";
    case ErrorCode::kNotOnSurface: return "NotOnSurface";
    case ErrorCode::kPlaneTooClose: return "PlaneTooClose";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace biref
