#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trackfusion::cli {

enum ExitCode : int { kSuccess = 0, kValidationError = 2, kNumericError = 3 };

/// Runs the command line `args` (program name first) and returns the
/// process exit code. Diagnostics go to `err`, summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trackfusion::cli
