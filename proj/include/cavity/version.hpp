#pragma once
#include <string>

#ifndef CAVITY_GIT_REV
#define CAVITY_GIT_REV "nogit"
#endif

namespace cavity {

inline constexpr const char* version_number = "0.3.0";

inline std::string version_string() {
    return std::string("cavity/") + version_number + "+g" + CAVITY_GIT_REV;
}

} // namespace cavity
