#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cnatlas {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  DegenerateFiber,
  PointCountMismatch,
  SingularTransform,
  InvalidGeometry,
  FormatError,
  UnsupportedDatatype,
  UnsupportedVariant,
  TruncatedFile,
  MissingAffine,
  IoError,
  CorruptAtlas,
  VersionError,
  EmptySubject,
  EmptyInput,
  NumericalFailure,
  ArityError,
  InvalidK,
  NotFound,
  GridMismatch,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Base exception for every failure raised by the library. Carries a typed
/// code so callers (and the C API) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

/// Re-throws the current exception with `stage` prepended to its message;
/// the error code is preserved.
[[noreturn]] void rethrow_tagged(std::string_view stage);

}  // namespace cnatlas
