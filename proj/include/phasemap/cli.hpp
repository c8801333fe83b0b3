#pragma once

#include <iosfwd>

namespace phasemap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point behind the `phasemap` executable: generate, solve, evaluate
// and report subcommands.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace phasemap::cli
