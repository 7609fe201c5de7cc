#pragma once

#include <ostream>

namespace glandsynth {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `glandsynth` tool: prepare, train, generate, eval {fid, dice, seg-assess}, serve.
/// Reports go to `out`, usage text and diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace glandsynth
