#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sealstamp/config.hpp"

namespace sealstamp {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitOperational = 1,
  kExitIntegrity = 2,  // integrity or authentication failure
  kExitPending = 3,    // anchoring still pending
};

int exit_code_for(ErrorCode code);

/// Entry point of the `sealstamp` tool. `args` excludes the program name.
/// Passwords come from SEALSTAMP_PASSWORD (looked up through `env`) or,
/// with --password-prompt, from one line of `in`.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err, const EnvLookup& env);

}  // namespace sealstamp
