#include <cctype>

#include "ttp/bytes.hpp"
#include "ttp/error.hpp"

namespace ttp {

std::string_view toString(ErrorCode code) {
  switch (code) {
    case ErrorCode::None: return "None";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::MalformedEncoding: return "MalformedEncoding";
    case ErrorCode::BadSeedLength: return "BadSeedLength";
    case ErrorCode::BadProofOfPossession: return "BadProofOfPossession";
    case ErrorCode::InvalidValidityWindow: return "InvalidValidityWindow";
    case ErrorCode::UnverifiableFactoryCert: return "UnverifiableFactoryCert";
    case ErrorCode::NotRegistered: return "NotRegistered";
    case ErrorCode::RevokedFactoryCert: return "RevokedFactoryCert";
    case ErrorCode::UnknownSerial: return "UnknownSerial";
    case ErrorCode::NameMismatch: return "NameMismatch";
    case ErrorCode::ProfileNotAllowed: return "ProfileNotAllowed";
    case ErrorCode::PeerUntrusted: return "PeerUntrusted";
    case ErrorCode::ReplayDetected: return "ReplayDetected";
    case ErrorCode::WrongSession: return "WrongSession";
    case ErrorCode::NotEstablished: return "NotEstablished";
    case ErrorCode::IntegrityFailure: return "IntegrityFailure";
    case ErrorCode::KeyCertMismatch: return "KeyCertMismatch";
    case ErrorCode::WrongPhase: return "WrongPhase";
    case ErrorCode::EnrollRejected: return "EnrollRejected";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::OutsideResetWindow: return "OutsideResetWindow";
    case ErrorCode::UnknownDevice: return "UnknownDevice";
    case ErrorCode::RegistrationFailed: return "RegistrationFailed";
    case ErrorCode::BadSp2Signature: return "BadSp2Signature";
    case ErrorCode::NoExpectedMeasurement: return "NoExpectedMeasurement";
    case ErrorCode::AttestationFailed: return "AttestationFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ScenarioInvalid: return "ScenarioInvalid";
    case ErrorCode::ConfigParseError: return "ConfigParseError";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
  }
  return "Unknown";
}

std::string toHex(BytesView b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (const auto v : b) {
    out.push_back(kDigits[v >> 4]);
    out.push_back(kDigits[v & 0x0f]);
  }
  return out;
}

Bytes fromHex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  int hi = -1;
  for (const char c : hex) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    const int v = nibble(c);
    if (v < 0) throw Error(ErrorCode::MalformedEncoding, "invalid hex character");
    if (hi < 0) {
      hi = v;
    } else {
      out.push_back(static_cast<std::uint8_t>(hi << 4 | v));
      hi = -1;
    }
  }
  if (hi >= 0) throw Error(ErrorCode::MalformedEncoding, "odd number of hex digits");
  return out;
}

}  // namespace ttp
