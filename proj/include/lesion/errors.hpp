#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lesion {

enum class ErrorKind {
  Dimension,
  Contract,
  Index,
  Config,
  DegenerateInput,
  EmptyMask,
  NoInput,
  Format,
  Layout,
  Collision,
  CorruptCheckpoint,
  SpecMismatch,
  Dependency,
  Divergence,
  NotFound,
  Integrity,
  Startup,
  Usage,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class KindError : public Error {
 public:
  explicit KindError(const std::string& message) : Error(K, message) {}
};

using DimensionError = KindError<ErrorKind::Dimension>;
using ContractError = KindError<ErrorKind::Contract>;
using IndexError = KindError<ErrorKind::Index>;
using ConfigError = KindError<ErrorKind::Config>;
using DegenerateInputError = KindError<ErrorKind::DegenerateInput>;
using EmptyMaskError = KindError<ErrorKind::EmptyMask>;
using NoInputError = KindError<ErrorKind::NoInput>;
using FormatError = KindError<ErrorKind::Format>;
using LayoutError = KindError<ErrorKind::Layout>;
using CollisionError = KindError<ErrorKind::Collision>;
using CorruptCheckpointError = KindError<ErrorKind::CorruptCheckpoint>;
using SpecMismatchError = KindError<ErrorKind::SpecMismatch>;
using DependencyError = KindError<ErrorKind::Dependency>;
using NotFoundError = KindError<ErrorKind::NotFound>;
using IntegrityError = KindError<ErrorKind::Integrity>;
using StartupError = KindError<ErrorKind::Startup>;
using UsageError = KindError<ErrorKind::Usage>;

/// Raised when a training loss becomes non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t iteration, const std::string& message)
      : Error(ErrorKind::Divergence, message), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Process exit code for the CLI: 1 usage/config, 3 divergence, 2 any data error.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace lesion
