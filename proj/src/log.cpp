#include "cdp/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace cdp {

static LogLevel parse_level() {
  const char* env = std::getenv("CDP_LOG");
  if (env == nullptr) return LogLevel::kWarn;
  if (std::strcmp(env, "off") == 0) return LogLevel::kOff;
  if (std::strcmp(env, "error") == 0) return LogLevel::kError;
  if (std::strcmp(env, "warn") == 0) return LogLevel::kWarn;
  if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
  if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
  return LogLevel::kWarn;
}

LogLevel log_level() {
  static LogLevel lvl = parse_level();
  return lvl;
}

void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static const char* names[] = {"off", "error", "warn", "info", "debug"};
  std::fprintf(stderr, "[cdp:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

}  // namespace cdp
