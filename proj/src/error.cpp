#include "topoforge/error.hpp"

namespace topoforge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::DisconnectedDomain: return "DisconnectedDomain";
    case ErrorCode::UnknownCase: return "UnknownCase";
    case ErrorCode::LoadOutsideDomain: return "LoadOutsideDomain";
    case ErrorCode::InvalidPoissonRatio: return "InvalidPoissonRatio";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::OutOfRangeDensity: return "OutOfRangeDensity";
    case ErrorCode::StaleSolution: return "StaleSolution";
    case ErrorCode::BisectionFailure: return "BisectionFailure";
    case ErrorCode::EmptyAdmissibleRegion: return "EmptyAdmissibleRegion";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ShapePlanInvalid: return "ShapePlanInvalid";
    case ErrorCode::DatasetMismatch: return "DatasetMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IncompatibleDims: return "IncompatibleDims";
    case ErrorCode::WeightsNotLoaded: return "WeightsNotLoaded";
    case ErrorCode::DisconnectedPrediction: return "DisconnectedPrediction";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Cancelled: return "Cancelled";
  }
  return "Unknown";
}

}  // namespace topoforge
