#include "evdm/error.hpp"

namespace evdm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorKind::TimeOutOfWindow: return "TimeOutOfWindow";
    case ErrorKind::OutsideMesh: return "OutsideMesh";
    case ErrorKind::TooFewEvents: return "TooFewEvents";
    case ErrorKind::NoAssociatedEvents: return "NoAssociatedEvents";
    case ErrorKind::InvalidSampleDensity: return "InvalidSampleDensity";
    case ErrorKind::OutOfImage: return "OutOfImage";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::NoTexture: return "NoTexture";
    case ErrorKind::RigidStageDiverged: return "RigidStageDiverged";
    case ErrorKind::TableMismatch: return "TableMismatch";
    case ErrorKind::NoSurvivors: return "NoSurvivors";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace evdm
