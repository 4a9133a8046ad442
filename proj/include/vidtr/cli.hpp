#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vidtr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `vidtr` command. `args` excludes the program name. Returns the
/// process exit code; nothing throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace vidtr
