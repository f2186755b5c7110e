#pragma once

namespace lrns {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lrns
