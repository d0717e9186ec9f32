#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace minigcn::cli {

/// Runs one command line (arguments after the program name). Returns the
/// process exit code: 0 success, 1 contract/config/numeric error, 2 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace minigcn::cli
