#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tclreg::cli {

/// Runs the command line (arguments without the program name). Returns the
/// process exit code: 0 ok, 1 usage, 2 bad input, 3 simulation failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for a library error kind tag.
int exit_code_for(const std::string& kind);

}  // namespace tclreg::cli
