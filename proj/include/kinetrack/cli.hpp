#pragma once

#include <string>
#include <vector>

namespace kinetrack {

// Runs one CLI invocation (args excludes the program name). Returns the
// process exit status: 0 success, 1 usage error, 2 data error, 3 numerical
// failure. Used by main() and exercised directly by tests.
int cli_run(const std::vector<std::string>& args);

}  // namespace kinetrack
