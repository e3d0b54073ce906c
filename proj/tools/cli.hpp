#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rowlane::cli {

enum ExitCode : int {
  kSuccess = 0,
  kRuntimeFailure = 1,
  kUsageError = 2,
};

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to
/// `err`, reports to `out`.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace rowlane::cli
