#pragma once

#include <iosfwd>

namespace rnr {

/// Entry point of the rnr command-line tool. Returns the process exit code: 0 on success,
/// 1 on numerical or convergence failure, 2 on invalid input or usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rnr
