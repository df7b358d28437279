#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace litsim {

enum class ErrorCode {
  // input-format errors (CLI exit 2)
  kMissingColumn,
  kNonMonotonicFrames,
  kFrameGap,
  kParse,
  // validation errors (CLI exit 3)
  kUnitRange,
  kTooShort,
  kInvalidArgument,
  kEgoMissing,
  kDegenerateInput,
  kNoLaneWithinRange,
  kOffMap,
  kNoRoute,
  kInsufficientHistory,
  kShapeMismatch,
  kLengthMismatch,
  kHorizonExceedsTrace,
  // runtime errors (CLI exit 1)
  kSinkFailure,
  kNonFiniteLoss,
  kNonFiniteGradient,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonMonotonicFrames: return "NonMonotonicFrames";
    case ErrorCode::kFrameGap: return "FrameGap";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kUnitRange: return "UnitRange";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEgoMissing: return "EgoMissing";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kNoLaneWithinRange: return "NoLaneWithinRange";
    case ErrorCode::kOffMap: return "OffMap";
    case ErrorCode::kNoRoute: return "NoRoute";
    case ErrorCode::kInsufficientHistory: return "InsufficientHistory";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kHorizonExceedsTrace: return "HorizonExceedsTrace";
    case ErrorCode::kSinkFailure: return "SinkFailure";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
  }
  return "Unknown";
}

}  // namespace litsim
