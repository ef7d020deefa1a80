#pragma once

#include <string>
#include <vector>

namespace inconvad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Parses argv (program name first) and runs one command.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace inconvad::cli
