#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace cpadmm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Command-line entry point; args[0] is the program name. Returns the process
/// exit status.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace cpadmm
