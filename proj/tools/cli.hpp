#pragma once

/**
 * @file cli.hpp
 * @brief Subcommand dispatcher behind the cfdgcn executable.
 *
 * Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure
 * (including failed gradient checks).
 */

#include <iosfwd>
#include <string>
#include <vector>

namespace cfdgcn::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cfdgcn::cli
