#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace itstyler::cli {

/// Exit codes of the command-line entry point.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `itstyler` invocation. `args` excludes the program name.
/// Diagnostics and the resolved-config echo go to `err`; data (code ids,
/// help text) goes to `out`.
int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int parse_and_dispatch(int argc, char** argv);

/// Splices the JSON object of `--config FILE` into the argument list as
/// flags, placed before the user's own flags and skipping keys the user
/// already set, so precedence is defaults < config < flags. Keys mirror long
/// flag names; `true` becomes a bare flag and `false` is dropped.
/// Throws Error(InvalidConfig) for unreadable files or nested values.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

} // namespace itstyler::cli
