#pragma once

#include <ostream>

namespace mlnc {

/// Exit codes of the command line tool.
enum ExitCode : int { kExitPass = 0, kExitVerifyFail = 1, kExitUsage = 2, kExitNumeric = 3 };

/// Entry point behind the `mlnc` executable: train, construct, verify,
/// landscape and lemmas subcommands.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlnc
