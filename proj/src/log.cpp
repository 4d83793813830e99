#include "balancekit/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace balancekit {

namespace {

LogLevel parse_level() {
  const char* raw = std::getenv("BALANCEKIT_LOG");
  if (raw == nullptr) return LogLevel::warn;
  const std::string value(raw);
  if (value == "quiet") return LogLevel::quiet;
  if (value == "info") return LogLevel::info;
  if (value == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

void emit(LogLevel level, const char* tag, const std::string& message) {
  if (log_level() < level) return;
  std::lock_guard<std::mutex> lock(log_mutex());
  std::cerr << tag << message << "\n";
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

void log_warn(const std::string& message) { emit(LogLevel::warn, "[balancekit] warning: ", message); }
void log_info(const std::string& message) { emit(LogLevel::info, "[balancekit] ", message); }
void log_debug(const std::string& message) { emit(LogLevel::debug, "[balancekit] debug: ", message); }

}  // namespace balancekit
