#include "egmsynth/errors.hpp"

namespace egmsynth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConstantSignal: return "ConstantSignal";
    case ErrorCode::UpsampleUnsupported: return "UpsampleUnsupported";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotConditional: return "NotConditional";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientSynthetic: return "InsufficientSynthetic";
    case ErrorCode::Leakage: return "Leakage";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace egmsynth
