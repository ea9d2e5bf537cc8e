#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

namespace tagforge::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold comes from TAGFORGE_LOG (error|warn|info|debug); default warn.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("TAGFORGE_LOG");
    if (env == nullptr) return Level::Warn;
    std::string_view v(env);
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

template <typename... Args>
void write(Level level, std::string_view tag, Args&&... args) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  std::ostringstream oss;
  oss << "[tagforge " << tag << "] ";
  (oss << ... << std::forward<Args>(args));
  oss << '\n';
  std::cerr << oss.str();
}

template <typename... Args>
void error(Args&&... args) { write(Level::Error, "error", std::forward<Args>(args)...); }
template <typename... Args>
void warn(Args&&... args) { write(Level::Warn, "warn", std::forward<Args>(args)...); }
template <typename... Args>
void info(Args&&... args) { write(Level::Info, "info", std::forward<Args>(args)...); }
template <typename... Args>
void debug(Args&&... args) { write(Level::Debug, "debug", std::forward<Args>(args)...); }

}  // namespace tagforge::log
