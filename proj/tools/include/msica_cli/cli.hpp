#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msica::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kAbort = 3 };

// Runs one `msica` invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msica::cli
