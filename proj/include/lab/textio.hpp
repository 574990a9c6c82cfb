#pragma once

#include <cstdio>
#include <string>

namespace lab {

// Full round-trip decimal formatting ('.' separator, locale-independent).
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace lab
