#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kbqa {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitMissingFile = 3,
  kExitBadConfig = 4,
  kExitDimensionMismatch = 5,
  kExitBadData = 6,
  kExitTrainingFailed = 7,
};

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kbqa
