#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deepfeat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `deepfeat` command. `args` excludes the program name. Results go
/// to `out`, progress and diagnostics to `err`. Returns the exit code:
/// 0 success, 1 runtime failure, 2 usage or validation failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepfeat::cli
