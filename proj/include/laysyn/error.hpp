#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace laysyn {

enum class Errc {
  OutOfDomain,
  ShapeMismatch,
  LayoutIncompatible,
  NotComplementable,
  NotInvertible,
  NotDivisible,
  Overflow,
  MisalignedAccess,
  ParseError,
  UnknownTensor,
  ArityError,
  CatalogFormatError,
  NonBijectiveLayout,
  NoInstructionAvailable,
  NonDivisibleTile,
  UnsolvedResidual,
  ConflictDetected,
  StrideConflict,
  Unsatisfiable,
  UnknownOp,
  InvalidArgument,
};

std::string_view errc_name(Errc code);

// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), detail_(what) {}

  Errc code() const noexcept { return code_; }
  /// The message without the error-kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace laysyn
