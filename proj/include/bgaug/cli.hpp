#pragma once

#include <string>
#include <vector>

namespace bgaug {

// Command-line entry point, callable in-process for tests. args excludes
// the program name. Returns the process exit code: 0 success, 2 config
// error, 3 numeric failure, 4 integrity failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace bgaug
