#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace transition_att {

enum class ErrorCode {
  // input and validation
  kMissingColumn,
  kUnbalancedPanel,
  kDuplicateObservation,
  kNonAbsorbingTreatment,
  kInvalidCohort,
  kUnknownLabel,
  kInvalidAlphabet,
  kIndexOutOfRange,
  kLagExceedsHistory,
  kMalformedInput,
  kDimensionMismatch,
  kStaggeredTiming,
  // estimation
  kEmptyControlCell,
  kEmptyWeightedCell,
  kNoTreatedUnits,
  kNoControlUnits,
  kInsufficientPrePeriods,
  kAllStartsFailed,
  kReplicateFailed,
  kTooManyFailures,
  kInsufficientReplicates,
  kEmptyControlSet,
  kEnumerationTooLarge,
  // front end
  kUsage,
  kIo,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kUnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::kDuplicateObservation: return "DuplicateObservation";
    case ErrorCode::kNonAbsorbingTreatment: return "NonAbsorbingTreatment";
    case ErrorCode::kInvalidCohort: return "InvalidCohort";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kInvalidAlphabet: return "InvalidAlphabet";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kLagExceedsHistory: return "LagExceedsHistory";
    case ErrorCode::kMalformedInput: return "MalformedInput";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kStaggeredTiming: return "StaggeredTiming";
    case ErrorCode::kEmptyControlCell: return "EmptyControlCell";
    case ErrorCode::kEmptyWeightedCell: return "EmptyWeightedCell";
    case ErrorCode::kNoTreatedUnits: return "NoTreatedUnits";
    case ErrorCode::kNoControlUnits: return "NoControlUnits";
    case ErrorCode::kInsufficientPrePeriods: return "InsufficientPrePeriods";
    case ErrorCode::kAllStartsFailed: return "AllStartsFailed";
    case ErrorCode::kReplicateFailed: return "ReplicateFailed";
    case ErrorCode::kTooManyFailures: return "TooManyFailures";
    case ErrorCode::kInsufficientReplicates: return "InsufficientReplicates";
    case ErrorCode::kEmptyControlSet: return "EmptyControlSet";
    case ErrorCode::kEnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::kUsage: return "UsageError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

// Validation errors describe bad input; everything else is raised while
// estimating on input that passed validation.
constexpr bool is_validation_error(ErrorCode code) {
  return code <= ErrorCode::kStaggeredTiming;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace transition_att
