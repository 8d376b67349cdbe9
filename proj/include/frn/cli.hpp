#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace frn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // bad flags, bad config, invalid inputs
inline constexpr int kExitInternal = 2;  // anything else

// Runs one subcommand. `args` excludes the program name. Metrics and
// command results go to `out`, usage text and progress logs to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int dispatch(int argc, char** argv);

}  // namespace frn::cli
