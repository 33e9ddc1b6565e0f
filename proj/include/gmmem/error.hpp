#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmem {

enum class ErrorCode {
  NonSimplexWeights,
  AsymmetricCovariance,
  NotPositiveDefinite,
  DegenerateMeans,
  InvalidSampleSize,
  SingleComponent,
  EmptyComponent,
  CovarianceSingular,
  DivergedLikelihood,
  LengthMismatch,
  ZeroReferenceWeight,
  ShapeMismatch,
  MissingComponent,
  EmptyCluster,
  InvalidArgument,
  ParseError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonSimplexWeights: return "NonSimplexWeights";
    case ErrorCode::AsymmetricCovariance: return "AsymmetricCovariance";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DegenerateMeans: return "DegenerateMeans";
    case ErrorCode::InvalidSampleSize: return "InvalidSampleSize";
    case ErrorCode::SingleComponent: return "SingleComponent";
    case ErrorCode::EmptyComponent: return "EmptyComponent";
    case ErrorCode::CovarianceSingular: return "CovarianceSingular";
    case ErrorCode::DivergedLikelihood: return "DivergedLikelihood";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroReferenceWeight: return "ZeroReferenceWeight";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingComponent: return "MissingComponent";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the condition so callers can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace gmmem
