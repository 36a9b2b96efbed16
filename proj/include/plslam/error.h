#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plslam {

enum class ErrorCode {
  kCoincidentPoints,
  kZeroLine,
  kNearOriginLine,
  kZeroBaseline,
  kDegenerateSegment,
  kDegenerateTriangulation,
  kUnobservableLine,
  kNegativeDepth,
  kEmptyWindow,
  kUnanchoredGauge,
  kInvalidConfig,
  kPipelineFailure,
  kLengthMismatch,
  kEmptyTrackSet,
  kIoFailure,
};

std::string_view ErrorCodeName(ErrorCode code);

// All recoverable failures in the library are reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kCoincidentPoints: return "CoincidentPoints";
    case ErrorCode::kZeroLine: return "ZeroLine";
    case ErrorCode::kNearOriginLine: return "NearOriginLine";
    case ErrorCode::kZeroBaseline: return "ZeroBaseline";
    case ErrorCode::kDegenerateSegment: return "DegenerateSegment";
    case ErrorCode::kDegenerateTriangulation: return "DegenerateTriangulation";
    case ErrorCode::kUnobservableLine: return "UnobservableLine";
    case ErrorCode::kNegativeDepth: return "NegativeDepth";
    case ErrorCode::kEmptyWindow: return "EmptyWindow";
    case ErrorCode::kUnanchoredGauge: return "UnanchoredGauge";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kPipelineFailure: return "PipelineFailure";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyTrackSet: return "EmptyTrackSet";
    case ErrorCode::kIoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace plslam
