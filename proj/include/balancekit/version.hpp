#pragma once

namespace balancekit {
inline constexpr const char* kVersion = "0.1.0";
}
