#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clora::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kDivergence = 3,
};

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace clora::cli
