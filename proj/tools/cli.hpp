#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ictp::cli {

/// Exit codes of the `ictp` executable.
enum ExitCode : int { ok = 0, check_failed = 1, usage_error = 2, data_error = 3 };

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ictp::cli
