#pragma once

#include <string>
#include <vector>

namespace eendvc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Runs one subcommand; args excludes the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace eendvc::cli
