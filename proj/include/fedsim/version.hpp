#pragma once

namespace fedsim {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the result/summary file layout changes; analyze refuses to
// mix files written under different schema versions.
inline constexpr int kSchemaVersion = 1;

}  // namespace fedsim
