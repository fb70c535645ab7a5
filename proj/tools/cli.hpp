#pragma once

#include <iosfwd>

namespace safe::cli {

/// Entry point for the `safe` command. Returns the process exit code;
/// diagnostics go to `err`, reports to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace safe::cli
