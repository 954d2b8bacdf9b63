#pragma once

namespace mfgld {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace mfgld
