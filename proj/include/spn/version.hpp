#pragma once

namespace spn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace spn
