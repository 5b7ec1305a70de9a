#pragma once

#include <iosfwd>

namespace icr::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,  // bad flags, unreadable or malformed model/report files
  kNotPermissible = 3,
  kNonConvergent = 4,
  kComparisonFailed = 5,
};

/// Entry point of the `icr` tool; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace icr::cli
