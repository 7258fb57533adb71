#pragma once
// Logging controlled by ACSAC_LOG: quiet | info | debug (default info).
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace acsac {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* e = std::getenv("ACSAC_LOG");
    if (!e) return LogLevel::info;
    if (std::strcmp(e, "quiet") == 0) return LogLevel::quiet;
    if (std::strcmp(e, "debug") == 0) return LogLevel::debug;
    return LogLevel::info;
  }();
  return lvl;
}

inline void log_at(LogLevel lvl, const char* fmt, ...) {
  if (int(lvl) > int(log_level())) return;
  va_list ap;
  va_start(ap, fmt);
  std::vfprintf(stderr, fmt, ap);
  va_end(ap);
  std::fputc('\n', stderr);
}

#define ACSAC_INFO(...) ::acsac::log_at(::acsac::LogLevel::info, __VA_ARGS__)
#define ACSAC_DEBUG(...) ::acsac::log_at(::acsac::LogLevel::debug, __VA_ARGS__)

}  // namespace acsac
