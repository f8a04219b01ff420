#pragma once

#include <ostream>

namespace cqc::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

// Entry point shared by the executable and the tests. Normal output goes to
// `out`, diagnostics and progress to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cqc::cli
