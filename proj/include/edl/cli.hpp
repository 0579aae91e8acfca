#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "edl/error.hpp"

namespace edl {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes of the `edl` command.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

int exit_code_for(ErrorKind kind);

// Runs one subcommand; args excludes the program name. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace edl
