// Command-line front end: train, baseline, behavior-change, sweep, compare.
#pragma once

#include <ostream>

namespace ammrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Default output root when --out is absent; falls back to "runs".
inline constexpr const char* kOutRootEnv = "AMMRL_OUT_ROOT";

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ammrl::cli
