// version.hpp — library version stamp embedded in every emitted artifact

#pragma once

namespace phasescope {

inline constexpr const char* kVersion = "0.1.0";

} // namespace phasescope
