#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace transport::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kEstimationFailure = 3 };

inline constexpr unsigned long long kDefaultSeed = 20230101ULL;

// Entry point shared by the executable and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace transport::cli
