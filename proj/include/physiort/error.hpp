#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace physiort {

enum class Errc {
  MalformedDocument,
  SchemaViolation,
  InvariantViolation,
  RangeViolation,
  ValueOutOfRange,
  SpecViolation,
  OverlapViolation,
  NyquistViolation,
  TooShort,
  WindowTooLong,
  ShapeViolation,
  EmptyCorpus,
  MalformedMessage,
  UnknownType,
  PortInUse,
  NoReadyPeers,
  ConnectFailed,
  ServerClosed,
  IoFailure,
  OutOfOrderSample,
  CorruptFile,
  InvalidId,
  NoSessions,
  KindMismatch,
  LengthMismatch,
  TransportError,
  InvalidState,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure raised by the library carries a machine-checkable code and,
// where it makes sense, the offending field or location.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::string field = {})
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        field_(std::move(field)) {}

  Errc code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Errc code_;
  std::string field_;
};

}  // namespace physiort
