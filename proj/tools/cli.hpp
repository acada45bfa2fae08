#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mal::cli {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kInvariant = 3 };

/// Runs one `mal` command. args excludes the program name. Output goes to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mal::cli
