#pragma once

#include <string>
#include <vector>

namespace lvcvc::cli {

// Default noise seed for conversion commands, so repeated invocations are
// reproducible without flags.
inline constexpr std::uint64_t kDefaultNoiseSeed = 1234;

// Runs one CLI invocation (argv without the program name). Exit codes:
// 0 success, 1 usage error, 2 data error, 3 checkpoint error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace lvcvc::cli
