#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace afflab {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitModel = 3 };

/// Runs one command ("dataset", "pretrain", "train", "eval", "bench" or
/// "render") with argv-style arguments (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace afflab
