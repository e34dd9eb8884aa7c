#pragma once

#include <string>
#include <vector>

namespace imltool {

// Parses and runs one command line (without the program name). Returns the
// process exit status: 0 on success, nonzero with a diagnostic on stderr.
int dispatch(std::vector<std::string> args);

}  // namespace imltool
