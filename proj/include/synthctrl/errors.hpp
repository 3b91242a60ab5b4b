#pragma once

#include <stdexcept>
#include <string>

namespace synthctrl {

// Stable error identifiers surfaced by the CLI as machine-readable records.
enum class ErrorCode {
  // data / panel
  NonAbsorbingTreatment,
  DuplicateCell,
  NoNeverTreatedUnit,
  NonNumericValue,
  EmptyDonorPool,
  InsufficientPretreatment,
  AllRowsDropped,
  MissingDonorOutcome,
  PeriodOutOfRange,
  EmptyCohort,
  // constraints / estimation
  UnsupportedFamily,
  DegenerateScale,
  TooManyFailures,
  TooFewResiduals,
  MissingJointCovariance,
  // solver
  NumericalFailure,
  SolverFailure,
  // config
  InvalidAlphas,
  ConfigError,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonAbsorbingTreatment: return "NonAbsorbingTreatment";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::NoNeverTreatedUnit: return "NoNeverTreatedUnit";
    case ErrorCode::NonNumericValue: return "NonNumericValue";
    case ErrorCode::EmptyDonorPool: return "EmptyDonorPool";
    case ErrorCode::InsufficientPretreatment: return "InsufficientPretreatment";
    case ErrorCode::AllRowsDropped: return "AllRowsDropped";
    case ErrorCode::MissingDonorOutcome: return "MissingDonorOutcome";
    case ErrorCode::PeriodOutOfRange: return "PeriodOutOfRange";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::UnsupportedFamily: return "UnsupportedFamily";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::TooFewResiduals: return "TooFewResiduals";
    case ErrorCode::MissingJointCovariance: return "MissingJointCovariance";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::InvalidAlphas: return "InvalidAlphas";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Exit-code buckets used by the CLI: 2 config, 3 data, 4 numerical.
inline int error_exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidAlphas:
    case ErrorCode::ConfigError:
    case ErrorCode::UnsupportedFamily:
      return 2;
    case ErrorCode::NumericalFailure:
    case ErrorCode::SolverFailure:
    case ErrorCode::TooManyFailures:
    case ErrorCode::DegenerateScale:
      return 4;
    default:
      return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }
  const char* code_name() const { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace synthctrl
