#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace ecpsim {

/// Log verbosity from SIM_LOG (0 = silent, 1 = warnings, 2 = per-step info).
/// Defaults to 1.
inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("SIM_LOG");
    if (env == nullptr || *env == '\0') return 1;
    return std::atoi(env);
  }();
  return level;
}

inline void log_line(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << "[sim] " << msg << "\n";
}

}  // namespace ecpsim
