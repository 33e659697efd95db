#include "cnatlas/core/error.hpp"

#include <exception>

namespace cnatlas {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DegenerateFiber: return "DegenerateFiber";
    case ErrorCode::PointCountMismatch: return "PointCountMismatch";
    case ErrorCode::SingularTransform: return "SingularTransform";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::UnsupportedVariant: return "UnsupportedVariant";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::MissingAffine: return "MissingAffine";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptAtlas: return "CorruptAtlas";
    case ErrorCode::VersionError: return "VersionError";
    case ErrorCode::EmptySubject: return "EmptySubject";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::ArityError: return "ArityError";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::GridMismatch: return "GridMismatch";
  }
  return "Unknown";
}

void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

void rethrow_tagged(std::string_view stage) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), "[" + std::string(stage) + "] " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::NumericalFailure,
                "[" + std::string(stage) + "] " + e.what());
  }
}

}  // namespace cnatlas
