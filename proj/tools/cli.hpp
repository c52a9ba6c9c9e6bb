#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ferkd::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_data_error = 1;
inline constexpr int exit_usage = 2;

// Runs one subcommand. args excludes the program name. Failures print a
// single JSON object on `err`: {"error": kind, "message": ..., ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ferkd::cli
