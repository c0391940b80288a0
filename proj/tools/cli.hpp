#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace countfit::cli {

enum ExitCode : int { kSuccess = 0, kInputError = 1, kAnalyticFailure = 2 };

/// Runs the command line `args` (args[0] is the program name). Messages go
/// to `err`; help and version text to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace countfit::cli
