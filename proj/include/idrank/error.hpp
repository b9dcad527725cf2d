#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace idrank {

/// Broad failure class, used by the CLI to pick an exit status.
enum class ErrorKind {
  io,          // open/read/write/rename failure
  format,      // bad magic, version, truncation, CRC, malformed JSON/CSV
  validation,  // invariant or precondition violated
  sampling,    // a probe stratum cannot be filled
  usage,       // bad arguments
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace idrank
