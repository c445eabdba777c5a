#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sfanet::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string usage();

}  // namespace sfanet::cli
