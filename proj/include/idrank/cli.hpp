#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace idrank::cli {

/// Exit statuses by failure category.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kValidation = 5,
  kSampling = 6,
  kInternal = 10,
};

/// Runs one subcommand. Results go to files or `out`; diagnostics and
/// progress go to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace idrank::cli
