#pragma once

#include <string>
#include <vector>

namespace dragfield {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // I/O and anything unclassified
  kExitParse = 2,    // malformed plan, tensor, flags or sampler settings
  kExitGeometry = 3,
  kExitBind = 4,
};

/// Runs `dragfield <subcommand> ...`; argv[0] is the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace dragfield
