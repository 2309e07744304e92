#pragma once

#include <string>
#include <vector>

namespace bocpd {

/// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric error.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Entry point for the command-line tool. Diagnostics go to standard error.
int cli_main(int argc, char** argv);

/// Same, with argv[0] omitted. Handy for in-process tests.
int cli_main(const std::vector<std::string>& args);

}  // namespace bocpd
