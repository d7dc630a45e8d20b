#pragma once

namespace gpq {

inline constexpr const char* kVersionString = "gpq-0.1.0";

}  // namespace gpq
