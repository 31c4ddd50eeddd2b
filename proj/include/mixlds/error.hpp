#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixlds {

enum class ErrorCode {
  kUnstableModel,
  kNoConvergence,
  kDimensionMismatch,
  kSingularGamma,
  kNonPsdResidual,
  kInvalidRho,
  kTooShort,
  kEmptyInput,
  kIndexOutOfRange,
  kInvalidK,
  kEmptyGrid,
  kTooManyClusters,
  kSingularNormalMatrix,
  kSingularW,
  kInvalidPermutation,
  kSizeMismatch,
  kTooManyModels,
  kInvalidArgument,
  kMissingSubset,
  kConfigParse,
  kIoError,
  kRaggedCsv,
};

inline std::string_view to_string(ErrorCode code);

/// All library failures are reported as this exception; code() identifies the
/// failure class so callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnstableModel: return "UnstableModel";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kSingularGamma: return "SingularGamma";
    case ErrorCode::kNonPsdResidual: return "NonPsdResidual";
    case ErrorCode::kInvalidRho: return "InvalidRho";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInvalidK: return "InvalidK";
    case ErrorCode::kEmptyGrid: return "EmptyGrid";
    case ErrorCode::kTooManyClusters: return "TooManyClusters";
    case ErrorCode::kSingularNormalMatrix: return "SingularNormalMatrix";
    case ErrorCode::kSingularW: return "SingularW";
    case ErrorCode::kInvalidPermutation: return "InvalidPermutation";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kTooManyModels: return "TooManyModels";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingSubset: return "MissingSubset";
    case ErrorCode::kConfigParse: return "ConfigParse";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kRaggedCsv: return "RaggedCsv";
  }
  return "Unknown";
}

}  // namespace mixlds
