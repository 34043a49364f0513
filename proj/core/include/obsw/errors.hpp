#pragma once

#include <stdexcept>
#include <string>

namespace obsw {

// Error categories. The CLI maps these onto distinct exit codes.
enum class errc {
  structural,     // malformed containers, dimension mismatches
  parameter,      // out-of-range scalar parameters
  specification,  // problem document inconsistent with the requested operation
  evaluation,     // expression evaluation failure (domain error, NaN)
  unsupported,    // operation refused for this problem class (oracle refusals)
  invariant,      // internal invariant violated (indicates bad inputs upstream)
  io              // file system / serialization failures
};

const char* to_string(errc) noexcept;

class Error : public std::runtime_error {
public:
  Error(errc kind, const std::string& msg);
  errc kind() const noexcept { return kind_; }

private:
  errc kind_;
};

[[noreturn]] void raise(errc kind, const std::string& msg);

}  // namespace obsw
