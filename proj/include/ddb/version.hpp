#pragma once

namespace ddb {

inline constexpr const char* kVersion = "ddb 0.1.0";

}  // namespace ddb
