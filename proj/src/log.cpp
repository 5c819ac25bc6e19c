#include "stereocenter/log.hpp"

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

#include "stereocenter/error.hpp"

namespace sc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kNonPositiveDisparity: return "NonPositiveDisparity";
    case ErrorCode::kDivergedSolution: return "DivergedSolution";
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kUnderconstrainedSystem: return "UnderconstrainedSystem";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kDegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::kInfeasiblePlacement: return "InfeasiblePlacement";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

namespace log {

namespace {

spdlog::level::level_enum level_from_env() {
  const char* value = std::getenv("SC_LOG");
  if (value == nullptr || *value == '\0') return spdlog::level::warn;
  return spdlog::level::from_str(value);
}

std::shared_ptr<spdlog::logger> make_logger() {
  auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
  auto logger = std::make_shared<spdlog::logger>("stereocenter", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(level_from_env());
  return logger;
}

}  // namespace

spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> instance = make_logger();
  return *instance;
}

void reload_level() { logger().set_level(level_from_env()); }

}  // namespace log
}  // namespace sc
