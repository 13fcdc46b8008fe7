#pragma once

#include <string>
#include <vector>

namespace curator::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitUsage = 64;

/// Runs one command line (without the program name) and returns its exit code.
int run(const std::vector<std::string>& args);

}  // namespace curator::cli
