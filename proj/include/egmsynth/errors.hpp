#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace egmsynth {

enum class ErrorCode {
  ConstantSignal,
  UpsampleUnsupported,
  TooFewRecords,
  InvalidConfig,
  IoFailure,
  ShapeMismatch,
  NotConditional,
  MissingClass,
  SignalTooShort,
  EmptySplit,
  NonFiniteLoss,
  EmptyTrainSet,
  EmptySet,
  LengthMismatch,
  InsufficientSynthetic,
  Leakage,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace egmsynth
