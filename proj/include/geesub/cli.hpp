#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geesub::cli {

/// Parses `args` (without the program name), runs the selected subcommand
/// and returns the process exit code. Reports go to `out`, diagnostics to
/// `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace geesub::cli
