#include "lattle/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace lattle {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("LATTLE_LOG");
    if (env == nullptr) return LogLevel::Info;
    if (std::strcmp(env, "error") == 0) return LogLevel::Error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

static void vlog(const char* tag, const char* fmt, va_list ap) {
  std::fprintf(stderr, "[%s] ", tag);
  std::vfprintf(stderr, fmt, ap);
  std::fputc('\n', stderr);
}

void log_error(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  vlog("error", fmt, ap);
  va_end(ap);
}

void log_info(const char* fmt, ...) {
  if (log_level() < LogLevel::Info) return;
  va_list ap;
  va_start(ap, fmt);
  vlog("info", fmt, ap);
  va_end(ap);
}

void log_debug(const char* fmt, ...) {
  if (log_level() < LogLevel::Debug) return;
  va_list ap;
  va_start(ap, fmt);
  vlog("debug", fmt, ap);
  va_end(ap);
}

}  // namespace lattle
