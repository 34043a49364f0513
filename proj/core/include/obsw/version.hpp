#pragma once

namespace obsw {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace obsw
