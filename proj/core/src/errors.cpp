#include "obsw/errors.hpp"

namespace obsw {

const char* to_string(errc k) noexcept {
  switch (k) {
    case errc::structural: return "structural";
    case errc::parameter: return "parameter";
    case errc::specification: return "specification";
    case errc::evaluation: return "evaluation";
    case errc::unsupported: return "unsupported";
    case errc::invariant: return "invariant";
    case errc::io: return "io";
  }
  return "unknown";
}

Error::Error(errc kind, const std::string& msg)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + msg), kind_(kind) {}

void raise(errc kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace obsw
