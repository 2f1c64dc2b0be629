#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deepoformer::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kInputError = 2 };

// Runs one command line (without the program name). Normal output goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepoformer::cli
