#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ttp {

enum class ErrorCode : std::uint16_t {
  None = 0,
  InvariantViolation,
  MalformedEncoding,
  BadSeedLength,
  BadProofOfPossession,
  InvalidValidityWindow,
  UnverifiableFactoryCert,
  NotRegistered,
  RevokedFactoryCert,
  UnknownSerial,
  NameMismatch,
  ProfileNotAllowed,
  PeerUntrusted,
  ReplayDetected,
  WrongSession,
  NotEstablished,
  IntegrityFailure,
  KeyCertMismatch,
  WrongPhase,
  EnrollRejected,
  BadSignature,
  OutsideResetWindow,
  UnknownDevice,
  RegistrationFailed,
  BadSp2Signature,
  NoExpectedMeasurement,
  AttestationFailed,
  Timeout,
  ScenarioInvalid,
  ConfigParseError,
  BudgetExceeded,
};

std::string_view toString(ErrorCode code);

/// Every failure in the library surfaces as this exception (or a subclass
/// carrying extra structured detail).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(toString(code)) + (detail.empty() ? "" : ": " + detail)),
        code_(code),
        detail_(detail) {}

  explicit Error(ErrorCode code) : Error(code, std::string()) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace ttp
