#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace grade::cli {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

// Runs one subcommand (generate, simulate, energy, grad-check, train).
// args excludes the program name. Exit codes: 0 success, 1 usage or input
// error, 2 numerical failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
             std::ostream& err = std::cerr);

}  // namespace grade::cli
