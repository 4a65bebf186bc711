#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sopa::cli {

/// Entry point for the `sopa` tool. Returns the process exit status:
/// 0 when the command's postcondition holds, 1 on failure, 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sopa::cli
