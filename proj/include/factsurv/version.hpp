#pragma once

namespace factsurv {

inline constexpr const char* kVersion = "0.1.0";

} // namespace factsurv
