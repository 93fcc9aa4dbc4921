#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cqe {

/// Runs one `cqe` subcommand. `args` excludes the program name. Text output
/// goes to `out` unless --output names a file; diagnostics go to `err`.
/// Returns the process exit code (0 on success).
int run_command(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace cqe
