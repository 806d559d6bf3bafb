#ifndef FLAIR_CLI_HPP
#define FLAIR_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace flair::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `flair` executable. Subcommands: simulate,
/// select-k, fit, evaluate, replicate. Each accepts `--config FILE` with
/// key=value lines whose keys mirror the long flags; flags given on the
/// command line win over file values.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flair::cli

#endif  // FLAIR_CLI_HPP
