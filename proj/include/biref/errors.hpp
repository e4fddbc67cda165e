#pragma once

#include <stdexcept>
#include <string>

namespace biref {

enum class ErrorCode {
  kNonPositiveKernel,
  kDomainError,
  kInfeasibleEll,
  kNoFeasibleEll,
  kInvalidInput,
  kZeroMass,
  kMassMismatch,
  kUnbalanced,
  kStalled,
  kTooLarge,
  kUnequalWeights,
  kNotTight,
  kInfeasiblePotentials,
  kNotSupporting,
  kNotOnSurface,
  kPlaneTooClose,
  kParseError,
  kIoError,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this type; the code lets callers
// (notably the CLI exit-code mapping) dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace biref
