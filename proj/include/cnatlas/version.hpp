#pragma once

namespace cnatlas {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cnatlas
