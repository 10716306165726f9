#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rltopic::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Entry point of the `rltopic` tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace rltopic::cli
