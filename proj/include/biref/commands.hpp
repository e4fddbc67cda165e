#pragma once

#include <iosfwd>

#include "biref/errors.hpp"

namespace biref {

/// Process exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitInfeasible = 1,
  kExitInputError = 2,
  kExitStalled = 3,
  kExitVerificationFailed = 4,
  kExitOracleMismatch = 5,
};

/// Exit code for a library error escaping a command.
int exit_code_for(ErrorCode code);

/// Entry point of the `biref` tool: validate | solve | verify | oracle.
/// Normal output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace biref
