#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lrvb::app {

enum ExitCode : int { kOk = 0, kValidation = 2, kNotConverged = 3, kNumerical = 4 };

/// Runs the command line. Reports go to `out` (or --out), messages to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace lrvb::app
