#pragma once

#include <iosfwd>

namespace evdm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point of the `evdm` tool: simulate, track, eval and render.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace evdm
