#pragma once

#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string_view>

namespace spectranet::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

inline Level& threshold() {
  static Level level = Level::info;
  return level;
}

inline void set_threshold(Level level) { threshold() = level; }

inline Level parse_level(std::string_view s) {
  if (s == "debug") return Level::debug;
  if (s == "info") return Level::info;
  if (s == "warn") return Level::warn;
  if (s == "error") return Level::error;
  if (s == "quiet") return Level::quiet;
  throw std::invalid_argument("unknown log level");
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline void write(Level level, std::string_view msg) {
  if (level < threshold()) return;
  static constexpr const char* tags[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(sink_mutex());
  std::clog << "[" << tags[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::debug, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void error(std::string_view msg) { write(Level::error, msg); }

}  // namespace spectranet::log
