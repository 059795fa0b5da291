#pragma once

#include <string>
#include <vector>

namespace bmode::cli {

// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
int run(const std::vector<std::string>& args);

}  // namespace bmode::cli
