#pragma once

namespace sievenet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sievenet
