#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dynrecon::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIoError = 3,
  kInputError = 4,
  kInfeasible = 5,
  kNumerical = 6,
};

/// Runs `dynrecon <subcommand> ...`. args[0] is the program name. Errors are
/// reported on `err` as a one-line JSON object.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dynrecon::cli
