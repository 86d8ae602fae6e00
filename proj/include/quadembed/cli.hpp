#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qde {

/// Process exit codes of the qde tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitTrainingAbort = 3,
  kExitDimension = 4,
  kExitDivergence = 5,
};

/// Runs `qde <subcommand> ...`; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qde
