#pragma once

#include <iosfwd>
#include <stdexcept>

namespace simmp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Bad invocation or configuration: exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Subcommands: gen-data, train, eval, inspect-memory, simulate-k.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace simmp
