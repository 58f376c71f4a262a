#pragma once

namespace nvtherm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nvtherm
