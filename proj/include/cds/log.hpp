#ifndef CDS_LOG_HPP
#define CDS_LOG_HPP

#include <iostream>
#include <string_view>

namespace cds {

enum class LogLevel { debug, info, warn, error, off };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::info;
  return level;
}

inline void log(LogLevel level, std::string_view msg) {
  if (level < log_level()) return;
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  std::clog << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void log_info(std::string_view msg) { log(LogLevel::info, msg); }
inline void log_warn(std::string_view msg) { log(LogLevel::warn, msg); }

}  // namespace cds

#endif  // CDS_LOG_HPP
