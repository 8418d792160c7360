#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evdm {

enum class ErrorKind {
  DegenerateTriangle,
  TimeOutOfWindow,
  OutsideMesh,
  TooFewEvents,
  NoAssociatedEvents,
  InvalidSampleDensity,
  OutOfImage,
  ZeroVariance,
  NoTexture,
  RigidStageDiverged,
  TableMismatch,
  NoSurvivors,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorKind kind);

// All recoverable failures in the library are reported through this type so
// callers can branch on the kind instead of parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace evdm
