#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gda4rec::cli {

/// Runs one command line (without the program name) and returns the process
/// exit code. Progress and tables go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gda4rec::cli
