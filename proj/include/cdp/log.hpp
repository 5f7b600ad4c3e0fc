#pragma once

#include <string>

namespace cdp {

enum class LogLevel { kOff = 0, kError = 1, kWarn = 2, kInfo = 3, kDebug = 4 };

/// Active verbosity, parsed once from the CDP_LOG environment variable
/// (off|error|warn|info|debug, default warn). Unknown values fall back to warn.
LogLevel log_level();

/// Writes one line to stderr when `level` is enabled.
void log_line(LogLevel level, const std::string& msg);

inline void log_error(const std::string& m) { log_line(LogLevel::kError, m); }
inline void log_warn(const std::string& m) { log_line(LogLevel::kWarn, m); }
inline void log_info(const std::string& m) { log_line(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log_line(LogLevel::kDebug, m); }

}  // namespace cdp
