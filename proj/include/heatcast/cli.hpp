#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace heatcast {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,       // invalid arguments or configuration
  kExitIo = 3,          // unreadable/unwritable files, malformed data files
  kExitDivergence = 4,  // training produced a non-finite loss
  kExitCheckpoint = 5,  // unreadable checkpoint or model config mismatch
  kExitIdMismatch = 6,  // forecast files and dataset disagree on scenario ids
};

/// Runs one command. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace heatcast
