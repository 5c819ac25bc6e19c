#pragma once

#include <utility>

#include <spdlog/spdlog.h>

namespace sc::log {

/// Library logger writing to stderr. The level comes from the SC_LOG
/// environment variable (trace, debug, info, warn, error, off; default warn).
spdlog::logger& logger();

/// Re-reads SC_LOG.
void reload_level();

template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().debug(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().warn(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void error(fmt::format_string<Args...> fmt, Args&&... args) {
  logger().error(fmt, std::forward<Args>(args)...);
}

}  // namespace sc::log
