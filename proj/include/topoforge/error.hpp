#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace topoforge {

enum class ErrorCode {
  DimensionMismatch,
  EmptyDomain,
  DisconnectedDomain,
  UnknownCase,
  LoadOutsideDomain,
  InvalidPoissonRatio,
  SingularSystem,
  NonConvergence,
  OutOfRangeDensity,
  StaleSolution,
  BisectionFailure,
  EmptyAdmissibleRegion,
  ShapeMismatch,
  ShapePlanInvalid,
  DatasetMismatch,
  ChecksumMismatch,
  IncompatibleDims,
  WeightsNotLoaded,
  DisconnectedPrediction,
  InvalidArgument,
  FormatError,
  IoError,
  Cancelled,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures are reported through this exception; `code()` is the
// machine-readable part, `what()` carries the human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace topoforge
