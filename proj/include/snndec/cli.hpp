#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace snndec {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Runs one command line (args[0] is the program name). Never throws.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace snndec
