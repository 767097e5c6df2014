#pragma once

#include <iosfwd>

namespace kpp::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Entry point behind the `kpp` binary. Exit codes: 0 success, 1 usage
/// error, 2 runtime error. Output goes to `out` unless --out names a file.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kpp::cli
