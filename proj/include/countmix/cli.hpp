#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace countmix::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kComputeError = 3 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace countmix::cli
