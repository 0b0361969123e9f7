#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subdyn {

/// Failure categories raised by the numerical modules. Each maps to exactly
/// one process exit code in the command-line front end.
enum class ErrorKind {
  IndexOutOfRange,
  EmptyOrFullSubspace,
  DimensionMismatch,
  NotHermitian,
  NearSingularResolvent,
  NoConvergence,
  SingularOmega,
  SingularH1,
  VanishingTrace,
  NonCommutingNumber,
  BadConfig,
  EmptyInterface,
  TooLarge,
  BlockStructureViolation,
  SingularDenominator,
  ParseError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyOrFullSubspace: return "EmptyOrFullSubspace";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotHermitian: return "NotHermitian";
    case ErrorKind::NearSingularResolvent: return "NearSingularResolvent";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularOmega: return "SingularOmega";
    case ErrorKind::SingularH1: return "SingularH1";
    case ErrorKind::VanishingTrace: return "VanishingTrace";
    case ErrorKind::NonCommutingNumber: return "NonCommutingNumber";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::EmptyInterface: return "EmptyInterface";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::BlockStructureViolation: return "BlockStructureViolation";
    case ErrorKind::SingularDenominator: return "SingularDenominator";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace subdyn
