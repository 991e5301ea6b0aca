#pragma once

#include <string>
#include <vector>

namespace trapscope::cli {

// Exit codes: 0 success, 1 acceptance or run failure, 2 usage/config error.
inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

int run(const std::vector<std::string>& args);

}  // namespace trapscope::cli
