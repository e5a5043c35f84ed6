#pragma once

// Device lifecycle state machine. Pure state: every network exchange is
// driven from outside (the simulator's device actor) and fed in through the
// methods below.
//
//   blank -> provisioned -> enrolled -> transferPending -> resetDone
//         -> [attested] -> [updated] -> reenrolled
//
// Any state from transferPending on may instead end in fallback.

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttp/crypto.hpp"
#include "ttp/messages.hpp"
#include "ttp/pki.hpp"
#include "ttp/rng.hpp"
#include "ttp/session.hpp"

namespace ttp::device {

enum class Phase : std::uint8_t {
  Blank,
  Provisioned,
  Enrolled,
  TransferPending,
  ResetDone,
  Attested,
  Updated,
  Reenrolled,
  Fallback,
};

std::string_view toString(Phase p);

bool isLifecycleEdge(Phase from, Phase to);
/// True iff `phases` starts at blank and follows lifecycle edges.
bool isLifecyclePrefix(std::span<const Phase> phases);

struct Endpoints {
  std::optional<Uri> caUri;
  std::optional<Uri> updateUri;
  std::optional<Uri> raUri;
  std::optional<Uri> fallbackUri;
  bool contactUpdateBeforeEnroll = false;
};

enum class PostResetStep : std::uint8_t { Attest, Update, Enroll, Done };

/// Values SP1 and SP2 agreed the device may keep across the reset.
struct AgreedState {
  CompactCertificate factoryCertificate;
  VersionInfo firmware;
  std::set<std::string> trustStoreRoots;
  TransferMessage transfer;
};

/// digest(stateDigest || nonce): what a device reports for an attestation
/// challenge.
Bytes attestationMeasurement(BytesView firmwareStateDigest, BytesView nonce);

class Device {
 public:
  Device(Bytes deviceId, VersionInfo firmware, Bytes imageDigest);

  /// Throws WrongPhase unless blank, KeyCertMismatch unless the certificate
  /// carries the key's public half.
  void provisionFactory(crypto::KeyPair factoryKey, CompactCertificate factoryCert, pki::TrustStore initialStore,
                        Uri caUri, std::optional<Uri> updateUri = std::nullopt);

  /// Fresh operational key pair plus CSR for the next enrollment.
  CertificateSigningRequest beginEnrollment(Rng& rng);
  /// Accepts the certificate returned for the last CSR. Throws
  /// KeyCertMismatch, EnrollRejected (profile, name or chain problem) or
  /// WrongPhase.
  void completeEnrollment(const CompactCertificate& cert, std::span<const CompactCertificate> chain, TimeStamp now);
  /// Server-generated key path.
  void installServerGeneratedKey(crypto::KeyPair key, const CompactCertificate& cert,
                                 std::span<const CompactCertificate> chain, TimeStamp now);

  void configureTransferSigner(Bytes publicKey) { transferSigner_ = std::move(publicKey); }
  void addTrustedRoot(const CompactCertificate& root, bool persistAcrossReset);
  void applyFirmware(VersionInfo version, Bytes imageDigest);

  /// Authenticates first: throws BadSignature, then WrongPhase or
  /// OutsideResetWindow.
  void handleTransferMessage(const SignedEnvelope& envelope, TimeStamp now);
  /// Throws WrongPhase or OutsideResetWindow (window checked again).
  void resetToAgreedState(TimeStamp now);

  PostResetStep nextPostResetStep() const;
  void markAttested();
  void markUpdated();
  void enterFallback(ErrorCode reason);
  void markFallbackContacted() { fallbackContacted_ = true; }

  /// digest(encode(firmware) || imageDigest).
  Bytes firmwareStateDigest() const;
  Bytes attest(BytesView nonce) const { return attestationMeasurement(firmwareStateDigest(), nonce); }
  /// Fault injection: corrupts the running image.
  void tamperFirmwareImage();

  session::Credential factoryCredential() const;
  std::optional<session::Credential> operationalCredential() const;

  const Bytes& id() const { return id_; }
  std::string name() const { return ttp::toString(id_); }
  Phase phase() const { return phase_; }
  const std::vector<Phase>& history() const { return history_; }
  const CompactCertificate& factoryCertificate() const { return factoryCert_; }
  const std::optional<crypto::KeyPair>& operationalKey() const { return operationalKey_; }
  const std::optional<CompactCertificate>& operationalCertificate() const { return operationalCert_; }
  const std::vector<CompactCertificate>& operationalChain() const { return operationalChain_; }
  const pki::TrustStore& trustStore() const { return trustStore_; }
  const Endpoints& endpoints() const { return endpoints_; }
  const VersionInfo& firmware() const { return firmware_; }
  const std::optional<TransferMessage>& pendingTransfer() const { return pendingTransfer_; }
  const std::optional<SignedEnvelope>& pendingEnvelope() const { return pendingEnvelope_; }
  const std::optional<Bytes>& transferSigner() const { return transferSigner_; }
  ErrorCode fallbackReason() const { return fallbackReason_; }
  bool fallbackContacted() const { return fallbackContacted_; }

  /// Post-reset audit: one line per field holding a value outside `agreed`.
  std::vector<std::string> auditAgainst(const AgreedState& agreed) const;
  /// Line-oriented dump of the device state.
  std::string report() const;

 private:
  void transition(Phase to);
  void requirePhase(std::initializer_list<Phase> allowed, std::string_view op) const;
  void installOperational(crypto::KeyPair key, const CompactCertificate& cert, std::span<const CompactCertificate> chain,
                          TimeStamp now);

  Bytes id_;
  Phase phase_ = Phase::Blank;
  std::vector<Phase> history_{Phase::Blank};
  std::optional<crypto::KeyPair> factoryKey_;
  CompactCertificate factoryCert_;
  std::optional<crypto::KeyPair> pendingKey_;
  std::optional<crypto::KeyPair> operationalKey_;
  std::optional<CompactCertificate> operationalCert_;
  std::vector<CompactCertificate> operationalChain_;
  pki::TrustStore trustStore_;
  Endpoints endpoints_;
  VersionInfo firmware_;
  Bytes imageDigest_;
  std::optional<TransferMessage> pendingTransfer_;
  std::optional<SignedEnvelope> pendingEnvelope_;
  std::optional<Bytes> transferSigner_;
  ErrorCode fallbackReason_ = ErrorCode::None;
  bool fallbackContacted_ = false;
};

}  // namespace ttp::device
