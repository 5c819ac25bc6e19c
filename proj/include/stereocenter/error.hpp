#pragma once

#include <stdexcept>
#include <string>

namespace sc {

/// Failure categories raised by the library. The numeric values are mirrored
/// by the `sc_status` codes of the C API.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kBehindCamera = 2,
  kNonPositiveDisparity = 3,
  kDivergedSolution = 4,
  kNonPositiveDepth = 5,
  kUnderconstrainedSystem = 6,
  kNonFiniteInput = 7,
  kMalformedLine = 8,
  kDegenerateCalibration = 9,
  kInfeasiblePlacement = 10,
  kIoError = 11,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sc
