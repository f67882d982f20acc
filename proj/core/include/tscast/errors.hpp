#pragma once

#include <stdexcept>
#include <string>

namespace tscast {

// Base of all library errors. `code()` is the stable machine-readable tag
// the CLI emits on the diagnostic stream.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

#define TSCAST_ERROR_TYPE(NAME)                                   \
  class NAME : public Error {                                     \
  public:                                                         \
    explicit NAME(const std::string& msg) : Error(#NAME, msg) {}  \
  };

TSCAST_ERROR_TYPE(IngestError)
TSCAST_ERROR_TYPE(ConstantVariableError)
TSCAST_ERROR_TYPE(WindowTooLongError)
TSCAST_ERROR_TYPE(FrequencyCountError)
TSCAST_ERROR_TYPE(WindowSizeError)
TSCAST_ERROR_TYPE(ShapeError)
TSCAST_ERROR_TYPE(NonFiniteError)
TSCAST_ERROR_TYPE(ConfigError)
TSCAST_ERROR_TYPE(NormalizationError)
TSCAST_ERROR_TYPE(SingularMatrixError)
TSCAST_ERROR_TYPE(ProbeError)
TSCAST_ERROR_TYPE(CheckpointMismatchError)
TSCAST_ERROR_TYPE(UsageError)

#undef TSCAST_ERROR_TYPE

class DivergenceError : public Error {
public:
  DivergenceError(long step, const std::string& msg)
      : Error("DivergenceError", msg), step_(step) {}
  long step() const noexcept { return step_; }

private:
  long step_;
};

}  // namespace tscast
