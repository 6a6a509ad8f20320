#pragma once

namespace formnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace formnet
