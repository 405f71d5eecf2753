#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dyronet::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;

// Parses and runs one command. Everything the command prints goes to `out`,
// diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyronet::cli
