#pragma once

namespace poctrl::cli {

// Full command-line entry point: parses argv, dispatches the subcommand,
// writes artifacts, and returns the process exit code:
//   0 success, 2 config error, 3 model validation failure,
//   4 numerical failure, 5 verification-suite failure.
int run_cli(int argc, const char* const* argv);

}  // namespace poctrl::cli
