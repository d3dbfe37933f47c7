#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rlad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsageError = 2;

/// Entry point of the `rlad` tool. `args[0]` is the program name. Data goes
/// to files or `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rlad::cli
