#pragma once

namespace tscope {

inline constexpr const char* kToolName = "torus-scope";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kSchemaVersion = "1";

}  // namespace tscope
