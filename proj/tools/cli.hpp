#pragma once

#include <string>
#include <vector>

namespace spatsurv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Parses and runs one subcommand. args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace spatsurv::cli
