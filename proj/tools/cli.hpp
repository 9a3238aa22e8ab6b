#pragma once

#include <string>
#include <vector>

namespace silnet {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Runs the tool on `args` (program name excluded) and returns the exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace silnet
