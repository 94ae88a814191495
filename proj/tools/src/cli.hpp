#pragma once

namespace streamdiar::cli {

// Full command-line driver: parses argv, dispatches to the subcommand and
// returns the process exit code (0 success, 1 usage error, 2 data error).
int run(int argc, const char* const* argv);

} // namespace streamdiar::cli
