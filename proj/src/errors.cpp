#include "lesion/errors.hpp"

namespace lesion {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Index: return "index";
    case ErrorKind::Config: return "config";
    case ErrorKind::DegenerateInput: return "degenerate_input";
    case ErrorKind::EmptyMask: return "empty_mask";
    case ErrorKind::NoInput: return "no_input";
    case ErrorKind::Format: return "format";
    case ErrorKind::Layout: return "layout";
    case ErrorKind::Collision: return "collision";
    case ErrorKind::CorruptCheckpoint: return "corrupt_checkpoint";
    case ErrorKind::SpecMismatch: return "spec_mismatch";
    case ErrorKind::Dependency: return "dependency";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::Startup: return "startup";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
      return 1;
    case ErrorKind::Divergence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace lesion
