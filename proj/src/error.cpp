#include "physiort/error.hpp"

namespace physiort {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedDocument: return "MalformedDocument";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::RangeViolation: return "RangeViolation";
    case Errc::ValueOutOfRange: return "ValueOutOfRange";
    case Errc::SpecViolation: return "SpecViolation";
    case Errc::OverlapViolation: return "OverlapViolation";
    case Errc::NyquistViolation: return "NyquistViolation";
    case Errc::TooShort: return "TooShort";
    case Errc::WindowTooLong: return "WindowTooLong";
    case Errc::ShapeViolation: return "ShapeViolation";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::UnknownType: return "UnknownType";
    case Errc::PortInUse: return "PortInUse";
    case Errc::NoReadyPeers: return "NoReadyPeers";
    case Errc::ConnectFailed: return "ConnectFailed";
    case Errc::ServerClosed: return "ServerClosed";
    case Errc::IoFailure: return "IoFailure";
    case Errc::OutOfOrderSample: return "OutOfOrderSample";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::InvalidId: return "InvalidId";
    case Errc::NoSessions: return "NoSessions";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TransportError: return "TransportError";
    case Errc::InvalidState: return "InvalidState";
  }
  return "Unknown";
}

}  // namespace physiort
