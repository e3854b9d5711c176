#pragma once

namespace salmet {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace salmet
