#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gatgpt::cli {

enum ExitCode : int { Ok = 0, Usage = 1, DataOrConfig = 2, Runtime = 3 };

/// Runs one subcommand. `args` excludes the program name. Results go to
/// files or `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

} // namespace gatgpt::cli
