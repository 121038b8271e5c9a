// version.hpp
#pragma once

namespace slowecho {
inline constexpr const char* version = "0.1.0";
}
